#include "stackvs/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "binary_io.hpp"
#include "config_json.hpp"
#include "stackvs/errors.hpp"

namespace stackvs {

using json = nlohmann::json;
using detail::Bytes;

namespace {

constexpr char kMagic[] = "SVSC";
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPreamble = 4 + 4 + 8;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_model_shapes(ckpt.model);
  if (ckpt.vocab.size() != ckpt.model.config.d_p) {
    throw ConfigError("checkpoint: vocabulary has " + std::to_string(ckpt.vocab.size()) + " tokens but d_p is " +
                      std::to_string(ckpt.model.config.d_p));
  }

  json params = json::array();
  Bytes payload;
  for (const auto& [name, t] : flatten(ckpt.model.params)) {
    if (!t->all_finite()) throw NumericError("checkpoint: parameter " + name + " is not finite");
    params.push_back({{"name", name}, {"shape", t->shape()}, {"offset", payload.size()}});
    for (std::size_t i = 0; i < t->size(); ++i) detail::put_f32(payload, static_cast<float>((*t)[i]));
  }
  const json header = {{"config", detail::to_json(ckpt.model.config)},
                       {"epoch", ckpt.epoch},
                       {"vocabulary", ckpt.vocab.tokens()},
                       {"params", params},
                       {"payload_bytes", payload.size()}};
  const std::string text = header.dump();

  Bytes out;
  detail::put_bytes(out, std::string_view(kMagic, 4));
  detail::put_le<std::uint32_t>(out, kVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  detail::put_bytes(out, text);
  out.insert(out.end(), payload.begin(), payload.end());
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<StackConfig>& expected) {
  const Bytes bytes = detail::read_file(path);
  const std::string what = "checkpoint " + path.string();
  detail::Reader in(bytes, what);
  if (in.bytes(4) != std::string_view(kMagic, 4)) throw FormatError(what + ": bad magic (expected SVSC)");
  if (auto v = in.le<std::uint32_t>(); v != kVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(v));
  }
  const auto header_len = in.le<std::uint64_t>();
  if (bytes.size() < kPreamble + 4 || header_len > bytes.size() - kPreamble - 4) {
    throw FormatError(what + ": truncated at byte " + std::to_string(bytes.size()));
  }
  const std::size_t body_end = bytes.size() - 4;
  detail::Reader tail(bytes, what);
  tail.bytes(body_end);
  const auto stored_crc = tail.le<std::uint32_t>();
  if (const auto crc = detail::crc32_of(bytes.data(), body_end); crc != stored_crc) {
    throw FormatError(what + ": checksum mismatch (stored " + std::to_string(stored_crc) + ", computed " +
                      std::to_string(crc) + ")");
  }

  Checkpoint out;
  json header, params;
  std::vector<std::string> tokens;
  std::size_t payload_bytes = 0;
  try {
    header = json::parse(in.bytes(header_len));
    out.epoch = header.at("epoch").get<std::size_t>();
    tokens = header.at("vocabulary").get<std::vector<std::string>>();
    payload_bytes = header.at("payload_bytes").get<std::size_t>();
    params = header.at("params");
  } catch (const json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  StackConfig config;
  try {
    detail::read_json(header.at("config"), config, "checkpoint config");
    config.validate();
  } catch (const std::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
  if (expected && !(*expected == config)) {
    throw ConfigError(what + " was saved with config " + config.describe() + " but " + expected->describe() +
                      " was expected");
  }
  const std::size_t payload_start = in.position();
  if (payload_start + payload_bytes != body_end) {
    throw FormatError(what + ": header declares " + std::to_string(payload_bytes) + " payload bytes but " +
                      std::to_string(body_end - payload_start) + " are present");
  }
  try {
    out.vocab = Vocabulary::from_tokens(tokens);
  } catch (const std::exception& e) {
    throw FormatError(what + ": vocabulary: " + e.what());
  }
  if (out.vocab.size() != config.d_p) throw FormatError(what + ": vocabulary size differs from d_p");

  out.model = zero_model(config);
  auto slots = flatten(out.model.params);
  if (!params.is_array() || params.size() != slots.size()) {
    throw FormatError(what + ": parameter manifest lists " + std::to_string(params.size()) + " tensors, expected " +
                      std::to_string(slots.size()));
  }
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    auto& [name, t] = slots[k];
    std::size_t offset = 0;
    Shape shape;
    try {
      if (params[k].at("name").get<std::string>() != name) {
        throw FormatError(what + ": manifest entry " + std::to_string(k) + " is " + params[k].at("name").dump() +
                          ", expected \"" + name + "\"");
      }
      shape = params[k].at("shape").get<Shape>();
      offset = params[k].at("offset").get<std::size_t>();
    } catch (const json::exception& e) {
      throw FormatError(what + ": manifest entry " + std::to_string(k) + ": " + e.what());
    }
    if (shape != t->shape()) {
      throw FormatError(what + ": " + name + " has shape " + shape_string(shape) + ", config implies " +
                        shape_string(t->shape()));
    }
    const std::size_t n = 4 * t->size();
    if (offset > payload_bytes || n > payload_bytes - offset) {
      throw FormatError(what + ": " + name + " lies outside the payload");
    }
    spans.emplace_back(offset, offset + n);
    for (std::size_t i = 0; i < t->size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[payload_start + offset + 4 * i + b]) << (8 * b);
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) throw FormatError(what + ": " + name + " holds a non-finite value");
      (*t)[i] = f;
    }
  }
  std::sort(spans.begin(), spans.end());
  std::size_t covered = 0;
  for (const auto& [begin, end] : spans) {
    if (begin != covered) throw FormatError(what + ": parameter offsets overlap or leave gaps");
    covered = end;
  }
  if (covered != payload_bytes) throw FormatError(what + ": parameters do not cover the payload");
  return out;
}

}  // namespace stackvs
