#include "stackvs/vocabulary.hpp"

#include <algorithm>

#include "stackvs/errors.hpp"
#include "stackvs/stack_decoder.hpp"

namespace stackvs {

namespace {
const char* const kSpecialTokens[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const char* s : kSpecialTokens) add(s);
}

void Vocabulary::add(const std::string& token) {
  if (!ids_.emplace(token, tokens_.size()).second) throw DataError("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, std::size_t min_count) {
  if (captions.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) {
    for (auto& t : tokenize(c)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, n] : counts) {
    if (n >= min_count && !std::ranges::count(kSpecialTokens, t)) kept.emplace_back(t, n);
  }
  std::ranges::stable_sort(kept, [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [t, n] : kept) v.add(t);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumSpecials) throw FormatError("vocabulary is missing its special tokens");
  for (std::size_t i = 0; i < kNumSpecials; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw FormatError("vocabulary id " + std::to_string(i) + " is '" + tokens[i] + "', expected " +
                        kSpecialTokens[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::string& caption, std::size_t max_len) const {
  if (max_len < 1) throw ConfigError("encode: max_len must be at least 1");
  std::vector<std::size_t> ids;
  for (const auto& t : tokenize(caption)) {
    if (ids.size() + 1 >= max_len) break;
    ids.push_back(id(t));
  }
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (auto i : ids) {
    if (i == kEos) break;
    if (i < kNumSpecials) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

}  // namespace stackvs
