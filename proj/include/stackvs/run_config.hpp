#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "stackvs/model.hpp"
#include "stackvs/trainer.hpp"

namespace stackvs {

/// Contents of a training config file:
///
///   {"model": {...StackConfig fields...},
///    "train": {...TrainConfig fields...},
///    "seed": 7,
///    "paths": {"data": "...", "out": "..."}}
///
/// Every section is optional and unknown keys are rejected. n_v, d_v, n_e,
/// d_p and n_attributes are normally left out and taken from the data; if
/// given they must agree with it. A top-level seed overrides train.seed.
struct RunConfig {
  StackConfig model;
  TrainConfig train;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> out;

  RunConfig();
};

/// Throws ConfigError on malformed JSON, unknown keys, wrong types or invalid values.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& config);

}  // namespace stackvs
