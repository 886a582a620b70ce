#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "stackvs/rng.hpp"
#include "stackvs/types.hpp"

namespace stackvs {

// Parameter structs are templated on their field type: Tensord for stored
// values, Vard for the same parameters bound to a tape, and Tensord again for
// gradient tables. visit_params() enumerates fields in a fixed order with
// stable names; checkpoints and optimizer state depend on that order.

/// LSTM weights. Gate rows are stacked in the order [input, forget, candidate, output].
template <typename T>
struct LstmParamsT {
  T input_weights;      // 4*d_h x d_in
  T recurrent_weights;  // 4*d_h x d_h
  T bias;               // 4*d_h
};

/// One additive attention head: a_k = w_a . tanh(W_feat f_k + W_prev p + W_hv h_v + W_hs h_s).
template <typename T>
struct AttentionParamsT {
  T score;         // 1 x d_a
  T feature_map;   // d_a x d_f
  T prev_map;      // d_a x d_f
  T hidden_v_map;  // d_a x d_h
  T hidden_s_map;  // d_a x d_h
};

using LstmParams = LstmParamsT<Tensord>;
using AttentionParams = AttentionParamsT<Tensord>;

template <typename T, typename F>
void visit_params(LstmParamsT<T>& p, const std::string& prefix, F&& f) {
  f(prefix + "input_weights", p.input_weights);
  f(prefix + "recurrent_weights", p.recurrent_weights);
  f(prefix + "bias", p.bias);
}

template <typename T, typename F>
void visit_params(AttentionParamsT<T>& p, const std::string& prefix, F&& f) {
  f(prefix + "score", p.score);
  f(prefix + "feature_map", p.feature_map);
  f(prefix + "prev_map", p.prev_map);
  f(prefix + "hidden_v_map", p.hidden_v_map);
  f(prefix + "hidden_s_map", p.hidden_s_map);
}

struct LstmState {
  Vard h;
  Vard c;
};

// Initialisation: uniform(-r, r) with r = 1/sqrt(fan-in); forget-gate bias +1.
LstmParams init_lstm(std::size_t d_in, std::size_t d_h, Rng& rng);
AttentionParams init_attention(std::size_t d_f, std::size_t d_h, std::size_t d_a, Rng& rng);
Tensord uniform_tensor(Shape shape, double radius, Rng& rng);
Tensord normal_tensor(Shape shape, Rng& rng);

LstmParams zero_lstm(std::size_t d_in, std::size_t d_h);
AttentionParams zero_attention(std::size_t d_f, std::size_t d_h, std::size_t d_a);

/// Zero hidden and cell state of width d_h recorded as constants on `tape`.
LstmState zero_lstm_state(Taped& tape, std::size_t d_h);

/// One LSTM recurrence: gates from W_x x + W_h h + b, c' = f*c + i*g, h' = o*tanh(c').
LstmState lstm_step(const LstmParamsT<Vard>& p, const LstmState& s, const Vard& x);

/// Unnormalised attention scores, one per row of `feats` (N x d_f).
Vard attention_logits(const AttentionParamsT<Vard>& p, const Vard& feats, const Vard& prev_attended, const Vard& h_v,
                      const Vard& h_s);

inline Vard attention_weights(const Vard& logits) { return softmax(logits); }

/// Convex combination sum_k weights[k] * feats[k] of the rows of `feats`.
Vard attend(const Vard& weights, const Vard& feats);

}  // namespace stackvs
