#pragma once

// JSON conversion for the configuration structs. Readers reject unknown keys.

#include <string>

#include "json.hpp"
#include "stackvs/model.hpp"
#include "stackvs/trainer.hpp"

namespace stackvs::detail {

nlohmann::json to_json(const StackConfig& c);
nlohmann::json to_json(const TrainConfig& c);

/// Fields absent from `j` keep the values already in `out`.
void read_json(const nlohmann::json& j, StackConfig& out, const std::string& where);
void read_json(const nlohmann::json& j, TrainConfig& out, const std::string& where);

}  // namespace stackvs::detail
