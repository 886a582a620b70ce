#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "stackvs/model.hpp"
#include "stackvs/vocabulary.hpp"

namespace stackvs {

/// A model, the vocabulary it was trained with and the last completed epoch.
struct Checkpoint {
  Model model;
  Vocabulary vocab;
  std::size_t epoch = 0;
};

/// Writes a `.svsc` file: magic "SVSC", u32 version, u64 header length, a
/// JSON header (config, epoch, vocabulary, parameter manifest of name, shape
/// and byte offset), the parameters as little-endian float32, then a CRC-32
/// of everything before it.
///
/// Identical checkpoints produce identical bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Reads a checkpoint. Bad magic, version, checksum or manifest raise
/// FormatError; a missing file raises DataError. If `expected` is given and
/// differs from the stored config, ConfigError lists both.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<StackConfig>& expected = std::nullopt);

}  // namespace stackvs
