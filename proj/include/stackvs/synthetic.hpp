#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stackvs/dataset.hpp"

namespace stackvs {

/// Synthetic captioning data with a known generating rule.
///
/// Each image carries two of `n_patterns` basis patterns; every feature row is
/// one of the two plus Gaussian noise, and both appear at least once. The
/// attribute ids and the single reference caption are functions of the
/// pattern pair alone, so a model can fit the data exactly.
struct SyntheticSpec {
  std::size_t n_images = 8;
  std::size_t n_v = 4;
  std::size_t d_v = 8;
  std::size_t n_e = 3;
  std::size_t n_attributes = 12;
  std::size_t vocab_size = 16;  // distinct caption words
  std::size_t caption_len = 5;  // words per caption, <eos> not counted
  std::size_t n_patterns = 5;
  double noise = 0.05;

  void validate() const;
};

/// The basis patterns (each of length d_v) used for `seed`.
std::vector<std::vector<double>> synthetic_patterns(const SyntheticSpec& spec, std::uint64_t seed);
std::string synthetic_caption(const SyntheticSpec& spec, std::size_t p1, std::size_t p2);
std::vector<std::size_t> synthetic_attributes(const SyntheticSpec& spec, std::size_t p1, std::size_t p2);

Dataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);
std::filesystem::path gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace stackvs
