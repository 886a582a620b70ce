#include "stackvs/model.hpp"

#include <cmath>
#include <sstream>

namespace stackvs {

void StackConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("StackConfig: ") + name + " must be positive");
  };
  positive(n_stages, "n_stages");
  positive(d_v, "d_v");
  positive(d_e, "d_e");
  positive(d_h, "d_h");
  positive(d_a, "d_a");
  positive(d_s, "d_s");
  positive(n_v, "n_v");
  positive(n_e, "n_e");
  positive(t_max, "t_max");
  positive(n_attributes, "n_attributes");
  if (d_p < 4) throw ConfigError("StackConfig: d_p must be at least 4 (special tokens), got " + std::to_string(d_p));
}

std::string StackConfig::describe() const {
  std::ostringstream os;
  os << "{n_stages=" << n_stages << ", d_v=" << d_v << ", d_e=" << d_e << ", d_h=" << d_h << ", d_a=" << d_a
     << ", d_s=" << d_s << ", d_p=" << d_p << ", n_v=" << n_v << ", n_e=" << n_e << ", t_max=" << t_max
     << ", n_attributes=" << n_attributes << "}";
  return os.str();
}

DecoderCellParams init_cell_params(const StackConfig& c, Rng& rng) {
  DecoderCellParams p;
  p.lstm_v = init_lstm(c.d_s + c.d_h, c.d_h, rng);
  p.lstm_s = init_lstm(c.d_s + c.d_h, c.d_h, rng);
  p.attn_v = init_attention(c.d_v, c.d_h, c.d_a, rng);
  p.attn_s = init_attention(c.d_e, c.d_h, c.d_a, rng);
  p.fc_v_weight = uniform_tensor({c.d_h, c.d_v}, 1.0 / std::sqrt(double(c.d_v)), rng);
  p.fc_v_bias = Tensord::zeros({c.d_h});
  p.fc_s_weight = uniform_tensor({c.d_h, c.d_e}, 1.0 / std::sqrt(double(c.d_e)), rng);
  p.fc_s_bias = Tensord::zeros({c.d_h});
  p.lstm_l = init_lstm(c.d_h, c.d_h, rng);
  p.out_proj = uniform_tensor({c.d_p, c.d_h}, std::sqrt(6.0 / double(c.d_p + c.d_h)), rng);  // Glorot
  return p;
}

DecoderCellParams zero_cell_params(const StackConfig& c) {
  DecoderCellParams p;
  p.lstm_v = zero_lstm(c.d_s + c.d_h, c.d_h);
  p.lstm_s = zero_lstm(c.d_s + c.d_h, c.d_h);
  p.attn_v = zero_attention(c.d_v, c.d_h, c.d_a);
  p.attn_s = zero_attention(c.d_e, c.d_h, c.d_a);
  p.fc_v_weight = Tensord::zeros({c.d_h, c.d_v});
  p.fc_v_bias = Tensord::zeros({c.d_h});
  p.fc_s_weight = Tensord::zeros({c.d_h, c.d_e});
  p.fc_s_bias = Tensord::zeros({c.d_h});
  p.lstm_l = zero_lstm(c.d_h, c.d_h);
  p.out_proj = Tensord::zeros({c.d_p, c.d_h});
  return p;
}

Model init_model(const StackConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m{config, {}};
  // Embedding rows start as standard normal draws.
  m.params.word_embedding = normal_tensor({config.d_p, config.d_s}, rng);
  m.params.attribute_embedding = normal_tensor({config.n_attributes, config.d_e}, rng);
  for (std::size_t i = 0; i < config.n_stages; ++i) m.params.stages.push_back(init_cell_params(config, rng));
  return m;
}

Model zero_model(const StackConfig& config) {
  config.validate();
  Model m{config, {}};
  m.params.word_embedding = Tensord::zeros({config.d_p, config.d_s});
  m.params.attribute_embedding = Tensord::zeros({config.n_attributes, config.d_e});
  for (std::size_t i = 0; i < config.n_stages; ++i) m.params.stages.push_back(zero_cell_params(config));
  return m;
}

void check_model_shapes(const Model& model) {
  model.config.validate();
  if (model.params.stages.size() != model.config.n_stages) {
    throw ShapeError("model has " + std::to_string(model.params.stages.size()) + " stages, config expects " +
                     std::to_string(model.config.n_stages));
  }
  // Compare against a freshly shaped zero model.
  const Model reference = zero_model(model.config);
  auto expected = flatten(reference.params);
  auto actual = flatten(model.params);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].second->shape() != actual[i].second->shape()) {
      throw ShapeError("parameter " + expected[i].first + " has shape " + shape_string(actual[i].second->shape()) +
                       ", config requires " + shape_string(expected[i].second->shape()));
    }
  }
}

}  // namespace stackvs
