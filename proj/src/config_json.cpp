#include "config_json.hpp"

#include <functional>
#include <map>
#include <type_traits>

#include "stackvs/errors.hpp"

namespace stackvs::detail {

using json = nlohmann::json;

namespace {

template <typename T>
using Fields = std::map<std::string, std::function<void(const json&, T&)>>;

template <typename T, typename V>
std::pair<const std::string, std::function<void(const json&, T&)>> field(const char* name, V T::* member) {
  return {name, [member](const json& j, T& out) {
            if constexpr (std::is_unsigned_v<V>) {
              if (!j.is_number_unsigned()) throw ConfigError("expected a nonnegative integer, got " + j.dump());
            } else {
              if (!j.is_number()) throw ConfigError("expected a number, got " + j.dump());
            }
            out.*member = j.get<V>();
          }};
}

template <typename T>
void read_fields(const json& j, T& out, const Fields<T>& fields, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    try {
      it->second(value, out);
    } catch (const json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

}  // namespace

json to_json(const StackConfig& c) {
  return {{"n_stages", c.n_stages},
          {"d_v", c.d_v},
          {"d_e", c.d_e},
          {"d_h", c.d_h},
          {"d_a", c.d_a},
          {"d_s", c.d_s},
          {"d_p", c.d_p},
          {"n_v", c.n_v},
          {"n_e", c.n_e},
          {"t_max", c.t_max},
          {"n_attributes", c.n_attributes}};
}

json to_json(const TrainConfig& c) {
  return {{"xe_lr", c.xe_lr},
          {"lr_decay", c.lr_decay},
          {"lr_decay_every", c.lr_decay_every},
          {"ss_increment", c.ss_increment},
          {"ss_every", c.ss_every},
          {"ss_cap", c.ss_cap},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"scst_lr", c.scst_lr},
          {"scst_start", c.scst_start},
          {"grad_clip", c.grad_clip},
          {"vocab_min_count", c.vocab_min_count},
          {"seed", c.seed}};
}

void read_json(const json& j, StackConfig& out, const std::string& where) {
  using S = StackConfig;
  static const Fields<S> fields = {field("n_stages", &S::n_stages),
                                   field("d_v", &S::d_v),
                                   field("d_e", &S::d_e),
                                   field("d_h", &S::d_h),
                                   field("d_a", &S::d_a),
                                   field("d_s", &S::d_s),
                                   field("d_p", &S::d_p),
                                   field("n_v", &S::n_v),
                                   field("n_e", &S::n_e),
                                   field("t_max", &S::t_max),
                                   field("n_attributes", &S::n_attributes)};
  read_fields(j, out, fields, where);
}

void read_json(const json& j, TrainConfig& out, const std::string& where) {
  using C = TrainConfig;
  static const Fields<C> fields = {field("xe_lr", &C::xe_lr),
                                   field("lr_decay", &C::lr_decay),
                                   field("lr_decay_every", &C::lr_decay_every),
                                   field("ss_increment", &C::ss_increment),
                                   field("ss_every", &C::ss_every),
                                   field("ss_cap", &C::ss_cap),
                                   field("batch_size", &C::batch_size),
                                   field("max_epochs", &C::max_epochs),
                                   field("scst_lr", &C::scst_lr),
                                   field("scst_start", &C::scst_start),
                                   field("grad_clip", &C::grad_clip),
                                   field("vocab_min_count", &C::vocab_min_count),
                                   field("seed", &C::seed)};
  read_fields(j, out, fields, where);
}

}  // namespace stackvs::detail
