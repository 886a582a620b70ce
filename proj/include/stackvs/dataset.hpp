#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "stackvs/types.hpp"

namespace stackvs {

struct DatasetRecord {
  std::string image_id;
  Tensord features;                        // N_v x d_v
  std::vector<std::size_t> attribute_ids;  // N_e ids into the attribute vocabulary
  std::vector<std::string> references;     // at least one caption
};

struct Dataset {
  std::size_t n_v = 0;
  std::size_t d_v = 0;
  std::size_t n_e = 0;
  std::vector<std::string> attributes;  // attribute vocabulary
  std::vector<DatasetRecord> records;

  /// Throws DataError on the first record that breaks the header contract.
  void validate() const;
  const DatasetRecord& find(const std::string& image_id) const;
};

/// Writes `<dir>/<stem>.manifest.json` plus its sidecars (.svsf features,
/// .jsonl records, attribute list) and returns the manifest path. Features
/// are stored as 32-bit floats.
std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& dir,
                                   const std::string& stem = "dataset");

/// Reads and validates a dataset. Format problems (magic, version, checksum,
/// truncation) raise FormatError; content problems raise DataError.
Dataset load_dataset(const std::filesystem::path& manifest);

/// All references grouped per record, tokenized.
std::vector<std::vector<std::vector<std::string>>> tokenized_references(const Dataset& data);

}  // namespace stackvs
