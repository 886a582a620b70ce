#include "stackvs/synthetic.hpp"

#include <algorithm>
#include <cstdio>

#include "stackvs/errors.hpp"
#include "stackvs/rng.hpp"

namespace stackvs {

namespace {

const char* const kWords[] = {"a",     "man",   "dog",   "cat",    "red",   "blue",  "green", "riding",
                              "on",    "the",   "grass", "street", "near",  "table", "ball",  "small",
                              "large", "white", "black", "bike",   "horse", "park",  "wall",  "sitting"};

std::string word(std::size_t i) {
  constexpr std::size_t n = std::size(kWords);
  return i < n ? kWords[i] : "word" + std::to_string(i);
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_images == 0) throw ConfigError("synthetic: images must be positive");
  if (n_v < 2) throw ConfigError("synthetic: N_v must be at least 2 (one row per pattern of the pair)");
  if (d_v == 0 || n_e == 0 || n_attributes == 0 || vocab_size == 0 || caption_len == 0) {
    throw ConfigError("synthetic: all dimensions must be positive");
  }
  if (n_patterns < 2) throw ConfigError("synthetic: at least two patterns are needed");
  if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be nonnegative");
}

std::vector<std::vector<double>> synthetic_patterns(const SyntheticSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out(spec.n_patterns, std::vector<double>(spec.d_v));
  for (auto& p : out) {
    for (auto& x : p) x = rng.normal();
  }
  return out;
}

std::string synthetic_caption(const SyntheticSpec& spec, std::size_t p1, std::size_t p2) {
  std::string out;
  for (std::size_t j = 0; j < spec.caption_len; ++j) {
    const std::size_t w = (p1 * (j + 1) + p2 * (2 * j + 3) + 5 * j) % spec.vocab_size;
    if (!out.empty()) out += ' ';
    out += word(w);
  }
  return out;
}

std::vector<std::size_t> synthetic_attributes(const SyntheticSpec& spec, std::size_t p1, std::size_t p2) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < spec.n_e; ++j) out.push_back((2 * p1 + 3 * p2 + 5 * j) % spec.n_attributes);
  return out;
}

Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto patterns = synthetic_patterns(spec, seed);
  Rng rng(seed ^ 0x5eed5eed5eed5eedULL);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < spec.n_patterns; ++a) {
    for (std::size_t b = a + 1; b < spec.n_patterns; ++b) pairs.emplace_back(a, b);
  }
  for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.below(i)]);

  Dataset data;
  data.n_v = spec.n_v;
  data.d_v = spec.d_v;
  data.n_e = spec.n_e;
  for (std::size_t a = 0; a < spec.n_attributes; ++a) data.attributes.push_back("attr" + std::to_string(a));

  for (std::size_t i = 0; i < spec.n_images; ++i) {
    const auto [p1, p2] = pairs[i % pairs.size()];
    std::vector<std::size_t> which(spec.n_v);
    which[0] = p1;
    which[1] = p2;
    for (std::size_t r = 2; r < spec.n_v; ++r) which[r] = rng.uniform() < 0.5 ? p1 : p2;
    for (std::size_t r = spec.n_v; r > 1; --r) std::swap(which[r - 1], which[rng.below(r)]);

    DatasetRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "img%04zu", i);
    rec.image_id = id;
    rec.features = Tensord(Shape{spec.n_v, spec.d_v});
    for (std::size_t r = 0; r < spec.n_v; ++r) {
      for (std::size_t c = 0; c < spec.d_v; ++c) {
        rec.features[r * spec.d_v + c] = patterns[which[r]][c] + spec.noise * rng.normal();
      }
    }
    rec.attribute_ids = synthetic_attributes(spec, p1, p2);
    rec.references = {synthetic_caption(spec, p1, p2)};
    data.records.push_back(std::move(rec));
  }
  return data;
}

std::filesystem::path gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& dir) {
  return save_dataset(make_synthetic(spec, seed), dir);
}

}  // namespace stackvs
