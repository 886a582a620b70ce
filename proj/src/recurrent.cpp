#include "stackvs/recurrent.hpp"

#include <cmath>

namespace stackvs {

Tensord uniform_tensor(Shape shape, double radius, Rng& rng) {
  Tensord t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-radius, radius);
  return t;
}

Tensord normal_tensor(Shape shape, Rng& rng) {
  Tensord t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

namespace {
double fan_in_radius(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }
}  // namespace

LstmParams init_lstm(std::size_t d_in, std::size_t d_h, Rng& rng) {
  LstmParams p;
  p.input_weights = uniform_tensor({4 * d_h, d_in}, fan_in_radius(d_in), rng);
  p.recurrent_weights = uniform_tensor({4 * d_h, d_h}, fan_in_radius(d_h), rng);
  p.bias = Tensord::zeros({4 * d_h});
  for (std::size_t j = d_h; j < 2 * d_h; ++j) p.bias[j] = 1.0;
  return p;
}

AttentionParams init_attention(std::size_t d_f, std::size_t d_h, std::size_t d_a, Rng& rng) {
  AttentionParams p;
  p.score = uniform_tensor({1, d_a}, fan_in_radius(d_a), rng);
  p.feature_map = uniform_tensor({d_a, d_f}, fan_in_radius(d_f), rng);
  p.prev_map = uniform_tensor({d_a, d_f}, fan_in_radius(d_f), rng);
  p.hidden_v_map = uniform_tensor({d_a, d_h}, fan_in_radius(d_h), rng);
  p.hidden_s_map = uniform_tensor({d_a, d_h}, fan_in_radius(d_h), rng);
  return p;
}

LstmParams zero_lstm(std::size_t d_in, std::size_t d_h) {
  return {Tensord::zeros({4 * d_h, d_in}), Tensord::zeros({4 * d_h, d_h}), Tensord::zeros({4 * d_h})};
}

AttentionParams zero_attention(std::size_t d_f, std::size_t d_h, std::size_t d_a) {
  return {Tensord::zeros({1, d_a}), Tensord::zeros({d_a, d_f}), Tensord::zeros({d_a, d_f}), Tensord::zeros({d_a, d_h}),
          Tensord::zeros({d_a, d_h})};
}

LstmState zero_lstm_state(Taped& tape, std::size_t d_h) {
  return {tape.leaf(Tensord::zeros({d_h})), tape.leaf(Tensord::zeros({d_h}))};
}

LstmState lstm_step(const LstmParamsT<Vard>& p, const LstmState& s, const Vard& x) {
  const auto& w_in = p.input_weights.value();
  const std::size_t gates = w_in.dim(0);
  if (gates % 4 != 0) throw ShapeError("lstm_step: gate rows " + std::to_string(gates) + " not divisible by 4");
  const std::size_t d_h = gates / 4;
  if (x.shape() != Shape{w_in.dim(1)}) {
    throw ShapeError("lstm_step: input " + shape_string(x.shape()) + " does not match weights " +
                     shape_string(w_in.shape()));
  }
  if (s.h.shape() != Shape{d_h} || s.c.shape() != Shape{d_h}) {
    throw ShapeError("lstm_step: state width does not match d_h=" + std::to_string(d_h));
  }
  Vard z = add(add(matmul(p.input_weights, x), matmul(p.recurrent_weights, s.h)), p.bias);
  Vard i = sigmoid(slice(z, 0, d_h));
  Vard f = sigmoid(slice(z, d_h, d_h));
  Vard g = tanh(slice(z, 2 * d_h, d_h));
  Vard o = sigmoid(slice(z, 3 * d_h, d_h));
  Vard c = add(mul(f, s.c), mul(i, g));
  Vard h = mul(o, tanh(c));
  return {h, c};
}

Vard attention_logits(const AttentionParamsT<Vard>& p, const Vard& feats, const Vard& prev_attended, const Vard& h_v,
                      const Vard& h_s) {
  if (feats.value().rank() != 2) {
    throw ShapeError("attention_logits: features must be N x d_f, got " + shape_string(feats.shape()));
  }
  if (feats.value().dim(1) != p.feature_map.value().dim(1)) {
    throw ShapeError(detail::mismatch("attention_logits", feats.shape(), p.feature_map.shape()));
  }
  // Query terms are shared by every feature row.
  Vard query = add(add(matmul(p.prev_map, prev_attended), matmul(p.hidden_v_map, h_v)), matmul(p.hidden_s_map, h_s));
  Vard hidden = tanh(add(matmul(feats, transpose(p.feature_map)), query));
  const std::size_t d_a = p.score.value().size();
  return matmul(hidden, reshape(p.score, Shape{d_a}));
}

Vard attend(const Vard& weights, const Vard& feats) {
  if (weights.value().rank() != 1 || feats.value().rank() != 2 || weights.value().size() != feats.value().dim(0)) {
    throw ShapeError(detail::mismatch("attend", weights.shape(), feats.shape()));
  }
  return matmul(weights, feats);
}

}  // namespace stackvs
