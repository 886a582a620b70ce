#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stackvs/recurrent.hpp"

namespace stackvs {

/// Dimensions of a stacked decoder.
struct StackConfig {
  std::size_t n_stages = 3;
  std::size_t d_v = 2048;        // visual feature width
  std::size_t d_e = 2048;        // attribute embedding width
  std::size_t d_h = 512;         // LSTM hidden width
  std::size_t d_a = 512;         // attention hidden width
  std::size_t d_s = 512;         // word embedding width
  std::size_t d_p = 0;           // vocabulary size, taken from the data
  std::size_t n_v = 36;          // visual regions per image
  std::size_t n_e = 20;          // attributes per image
  std::size_t t_max = 16;        // maximum caption length including <eos>
  std::size_t n_attributes = 0;  // attribute vocabulary size, taken from the data

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

/// Parameters of one decoder cell (one stage). Stages do not share weights.
template <typename T>
struct DecoderCellParamsT {
  LstmParamsT<T> lstm_v;       // input d_s + d_h
  LstmParamsT<T> lstm_s;       // input d_s + d_h
  AttentionParamsT<T> attn_v;  // d_f = d_v
  AttentionParamsT<T> attn_s;  // d_f = d_e
  T fc_v_weight;               // d_h x d_v
  T fc_v_bias;                 // d_h
  T fc_s_weight;               // d_h x d_e
  T fc_s_bias;                 // d_h
  LstmParamsT<T> lstm_l;       // input d_h
  T out_proj;                  // d_p x d_h
};

template <typename T>
struct ModelParamsT {
  T word_embedding;       // d_p x d_s; row 1 (<bos>) feeds step 0
  T attribute_embedding;  // n_attributes x d_e
  std::vector<DecoderCellParamsT<T>> stages;
};

using DecoderCellParams = DecoderCellParamsT<Tensord>;
using ModelParams = ModelParamsT<Tensord>;

template <typename T, typename F>
void visit_params(DecoderCellParamsT<T>& p, const std::string& prefix, F&& f) {
  visit_params(p.lstm_v, prefix + "lstm_v.", f);
  visit_params(p.lstm_s, prefix + "lstm_s.", f);
  visit_params(p.attn_v, prefix + "attn_v.", f);
  visit_params(p.attn_s, prefix + "attn_s.", f);
  f(prefix + "fc_v.weight", p.fc_v_weight);
  f(prefix + "fc_v.bias", p.fc_v_bias);
  f(prefix + "fc_s.weight", p.fc_s_weight);
  f(prefix + "fc_s.bias", p.fc_s_bias);
  visit_params(p.lstm_l, prefix + "lstm_l.", f);
  f(prefix + "out_proj", p.out_proj);
}

template <typename T, typename F>
void visit_params(ModelParamsT<T>& p, const std::string& prefix, F&& f) {
  f(prefix + "word_embedding", p.word_embedding);
  f(prefix + "attribute_embedding", p.attribute_embedding);
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    visit_params(p.stages[i], prefix + "stage" + std::to_string(i) + ".", f);
  }
}

template <typename P, typename F>
void visit_params(const P& p, const std::string& prefix, F&& f) {
  visit_params(const_cast<P&>(p), prefix, [&](const std::string& name, auto& v) { f(name, std::as_const(v)); });
}

/// Records every parameter as a leaf of `tape`.
template <template <class> class P>
P<Vard> bind(Taped& tape, const P<Tensord>& params) {
  std::vector<const Tensord*> values;
  visit_params(params, "", [&](const std::string&, const Tensord& t) { values.push_back(&t); });
  P<Vard> out;
  if constexpr (requires { out.stages; }) out.stages.resize(params.stages.size());
  std::size_t i = 0;
  visit_params(out, "", [&](const std::string&, Vard& v) { v = tape.leaf(*values.at(i++)); });
  return out;
}

/// Gradient table with the same layout as the bound parameters.
template <template <class> class P>
P<Tensord> gradients(const Taped& tape, const P<Vard>& bound) {
  std::vector<Tensord> grads;
  visit_params(bound, "", [&](const std::string&, const Vard& v) { grads.push_back(tape.grad(v)); });
  P<Tensord> out;
  if constexpr (requires { out.stages; }) out.stages.resize(bound.stages.size());
  std::size_t i = 0;
  visit_params(out, "", [&](const std::string&, Tensord& t) { t = std::move(grads.at(i++)); });
  return out;
}

/// Flat, ordered list of (name, tensor) references.
template <typename P>
std::vector<std::pair<std::string, Tensord*>> flatten(P& params) {
  std::vector<std::pair<std::string, Tensord*>> out;
  visit_params(params, "", [&](const std::string& name, Tensord& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename P>
std::vector<std::pair<std::string, const Tensord*>> flatten(const P& params) {
  std::vector<std::pair<std::string, const Tensord*>> out;
  visit_params(params, "", [&](const std::string& name, const Tensord& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename P>
P zeros_like(const P& params) {
  P out = params;
  visit_params(out, "", [](const std::string&, Tensord& t) { t = Tensord::zeros(t.shape()); });
  return out;
}

template <typename P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  visit_params(params, "", [&](const std::string&, const Tensord& t) { n += t.size(); });
  return n;
}

/// A configuration together with its parameters.
struct Model {
  StackConfig config;
  ModelParams params;
};

DecoderCellParams init_cell_params(const StackConfig& config, Rng& rng);
DecoderCellParams zero_cell_params(const StackConfig& config);
Model init_model(const StackConfig& config, std::uint64_t seed);
Model zero_model(const StackConfig& config);

/// Throws ShapeError if any parameter shape disagrees with `config`.
void check_model_shapes(const Model& model);

}  // namespace stackvs
