#include "stackvs/run_config.hpp"

#include "binary_io.hpp"
#include "config_json.hpp"
#include "stackvs/errors.hpp"

namespace stackvs {

using json = nlohmann::json;

RunConfig::RunConfig() {
  model.d_v = 0;
  model.n_v = 0;
  model.n_e = 0;
}

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig out;
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      detail::read_json(value, out.model, "model");
    } else if (key == "train") {
      detail::read_json(value, out.train, "train");
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("seed: expected a nonnegative integer");
    } else if (key == "paths") {
      if (!value.is_object()) throw ConfigError("paths: expected a JSON object");
      for (const auto& [name, path] : value.items()) {
        if (!path.is_string()) throw ConfigError("paths." + name + ": expected a string");
        if (name == "data") {
          out.data = path.get<std::string>();
        } else if (name == "out") {
          out.out = path.get<std::string>();
        } else {
          throw ConfigError("paths: unknown key '" + name + "'");
        }
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (j.contains("seed")) out.train.seed = j["seed"].get<std::uint64_t>();

  out.train.validate();
  // Data-derived fields may still be zero here.
  StackConfig probe = out.model;
  for (std::size_t* f : {&probe.d_v, &probe.n_v, &probe.n_e, &probe.n_attributes}) {
    if (*f == 0) *f = 1;
  }
  if (probe.d_p == 0) probe.d_p = kNumSpecials;
  probe.validate();
  return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text);
}

std::string run_config_json(const RunConfig& config) {
  json j = {{"model", detail::to_json(config.model)}, {"train", detail::to_json(config.train)}};
  if (config.data || config.out) {
    j["paths"] = json::object();
    if (config.data) j["paths"]["data"] = config.data->string();
    if (config.out) j["paths"]["out"] = config.out->string();
  }
  return j.dump(2);
}

}  // namespace stackvs
