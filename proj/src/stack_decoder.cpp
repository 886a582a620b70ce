#include "stackvs/stack_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stackvs {

namespace {

double contribution_ratio(const Vard& fc_v, const Vard& fc_s) {
  const double mv = fc_v.value().values().cwiseAbs().sum();
  const double ms = fc_s.value().values().cwiseAbs().sum();
  if (mv + ms == 0.0) return 0.5;
  return mv / (mv + ms);
}

Vectord column(const Vard& v) { return v.value().values().col(0); }

Vectord log_probs(const Vectord& probs) {
  return probs.unaryExpr([](double p) { return std::log(std::max(p, kLogClamp)); });
}

// Preference order for breaking exact ties: content ids first, then specials.
std::size_t tie_rank(std::size_t token) { return token >= kNumSpecials ? token - kNumSpecials : 1'000'000 + token; }

}  // namespace

ImageInputs bind_image(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                       const Tensord& features, std::span<const std::size_t> attribute_ids) {
  if (features.shape() != Shape{config.n_v, config.d_v}) {
    throw ShapeError("features " + shape_string(features.shape()) + " do not match N_v x d_v = [" +
                     std::to_string(config.n_v) + "x" + std::to_string(config.d_v) + "]");
  }
  if (attribute_ids.size() != config.n_e) {
    throw ShapeError("expected " + std::to_string(config.n_e) + " attribute ids, got " +
                     std::to_string(attribute_ids.size()));
  }
  return {tape.leaf(features), row_select(params.attribute_embedding, attribute_ids)};
}

DecoderState initial_decoder_state(Taped& tape, const StackConfig& config) {
  DecoderState s;
  for (std::size_t i = 0; i < config.n_stages; ++i) s.stages.push_back(init_cell_state(tape, config));
  s.h_final = tape.leaf(Tensord::zeros({config.d_h}));
  return s;
}

StepResult decoder_step(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                        const ImageInputs& image, DecoderState& state, std::size_t input_token) {
  if (input_token >= config.d_p) {
    throw ShapeError("token id " + std::to_string(input_token) + " out of range for vocabulary of " +
                     std::to_string(config.d_p));
  }
  const std::size_t row[] = {input_token};
  Vard word = reshape(row_select(params.word_embedding, row), Shape{config.d_s});

  StepResult out;
  StageCarry carry = coarse_carry(tape, config, state.h_final);
  for (std::size_t i = 0; i < config.n_stages; ++i) {
    CellOutput cell;
    try {
      cell = cell_step(params.stages[i], state.stages[i], word, image.visual, image.semantic, carry);
      out.probs.push_back(softmax(cell.logits));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (stage " + std::to_string(i + 1) + ", step " +
                         std::to_string(state.t) + ")");
    }
    state.stages[i] = cell.state;
    out.consumed.push_back(carry);
    out.produced.push_back(cell.carry);
    out.logits.push_back(cell.logits);
    out.trace.push_back(
        {i, state.t, column(cell.alpha_v), column(cell.alpha_s), contribution_ratio(cell.fc_v, cell.fc_s)});
    carry = cell.carry;
  }
  state.h_final = carry.h_lang;
  ++state.t;
  return out;
}

TeacherForced forward_teacher_forced(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                                     const Tensord& features, std::span<const std::size_t> attribute_ids,
                                     std::span<const std::size_t> gold, double ss_prob, Rng& rng) {
  if (gold.empty() || gold.size() > config.t_max) {
    throw ShapeError("gold sequence length " + std::to_string(gold.size()) + " outside [1, " +
                     std::to_string(config.t_max) + "]");
  }
  for (auto tok : gold) {
    if (tok >= config.d_p) {
      throw ShapeError("gold token id " + std::to_string(tok) + " out of range for vocabulary of " +
                       std::to_string(config.d_p));
    }
  }
  if (!(ss_prob >= 0.0 && ss_prob <= 1.0)) throw ConfigError("ss_prob must lie in [0, 1]");

  ImageInputs image = bind_image(tape, config, params, features, attribute_ids);
  DecoderState state = initial_decoder_state(tape, config);
  TeacherForced out;
  out.probs.resize(config.n_stages);
  out.trace = {config.n_stages, config.n_v, config.n_e, {}};

  std::size_t input = kBos;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (t > 0) {
      input = gold[t - 1];
      if (ss_prob > 0.0 && rng.uniform() < ss_prob) {
        const Vectord p = column(out.probs.back()[t - 1]);
        input = rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
      }
    }
    out.inputs.push_back(input);
    StepResult step = decoder_step(tape, config, params, image, state, input);
    for (std::size_t i = 0; i < config.n_stages; ++i) out.probs[i].push_back(step.probs[i]);
    for (auto& e : step.trace) out.trace.entries.push_back(std::move(e));
  }
  return out;
}

TapedRollout rollout_on_tape(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                             const ImageInputs& image, const TokenChooser& choose) {
  TapedRollout out;
  Rollout& r = out.rollout;
  r.trace = {config.n_stages, config.n_v, config.n_e, {}};
  DecoderState state = initial_decoder_state(tape, config);
  std::size_t input = kBos;
  for (std::size_t t = 0; t < config.t_max; ++t) {
    StepResult step = decoder_step(tape, config, params, image, state, input);
    std::vector<Vectord> row;
    for (const auto& l : step.logits) row.push_back(column(l));
    r.logits.push_back(std::move(row));
    for (auto& e : step.trace) r.trace.entries.push_back(std::move(e));

    const Vard& final_probs = step.probs.back();
    const std::size_t token = choose(t, column(final_probs));
    if (token >= config.d_p) throw ShapeError("token chooser returned out-of-range id");
    Vard lp = scale(nll_gather(final_probs, token), -1.0);
    out.log_prob = out.log_prob.valid() ? add(out.log_prob, lp) : lp;
    r.tokens.push_back(token);
    if (token == kEos) break;
    input = token;
  }
  r.log_prob = out.log_prob.value().item();
  return out;
}

std::size_t greedy_choice(const Vectord& probs) {
  const Vectord lp = log_probs(probs);
  std::size_t best = 0;
  bool have = false;
  for (std::size_t k = 0; k < static_cast<std::size_t>(lp.size()); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const auto bb = static_cast<Eigen::Index>(best);
    if (!have || lp(kk) > lp(bb) || (lp(kk) == lp(bb) && tie_rank(k) < tie_rank(best))) {
      best = k;
      have = true;
    }
  }
  return best;
}

namespace {

Rollout run_untaped(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids,
                    const TokenChooser& choose) {
  Taped tape;
  auto bound = bind<ModelParamsT>(tape, model.params);
  ImageInputs image = bind_image(tape, model.config, bound, features, attribute_ids);
  return rollout_on_tape(tape, model.config, bound, image, choose).rollout;
}

}  // namespace

Rollout decode_greedy(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids) {
  return run_untaped(model, features, attribute_ids, [](std::size_t, const Vectord& p) { return greedy_choice(p); });
}

Rollout decode_sample(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids,
                      Rng& rng) {
  return run_untaped(model, features, attribute_ids, [&](std::size_t, const Vectord& p) {
    return rng.categorical(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  });
}

Rollout decode_beam(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids,
                    std::size_t beam_width) {
  if (beam_width == 0) throw ConfigError("beam width must be at least 1");
  const StackConfig& config = model.config;
  Taped tape;
  auto bound = bind<ModelParamsT>(tape, model.params);
  ImageInputs image = bind_image(tape, config, bound, features, attribute_ids);

  struct Hypothesis {
    Rollout rollout;
    DecoderState state;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    std::size_t token;
  };

  std::vector<Hypothesis> live;
  live.push_back(
      {Rollout{{}, {}, 0.0, {config.n_stages, config.n_v, config.n_e, {}}}, initial_decoder_state(tape, config)});
  std::vector<Rollout> finished;

  for (std::size_t t = 0; t < config.t_max && !live.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<StepResult> steps;
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto& hyp = live[h];
      const std::size_t input = hyp.rollout.tokens.empty() ? kBos : hyp.rollout.tokens.back();
      steps.push_back(decoder_step(tape, config, bound, image, hyp.state, input));
      const Vectord lp = log_probs(column(steps.back().probs.back()));
      for (std::size_t k = 0; k < config.d_p; ++k) {
        candidates.push_back({hyp.rollout.log_prob + lp(static_cast<Eigen::Index>(k)), h, k});
      }
    }
    const std::size_t keep = std::min(beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return tie_rank(a.token) < tie_rank(b.token);
                      });

    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      Hypothesis hyp = live[cand.parent];
      const StepResult& step = steps[cand.parent];
      std::vector<Vectord> row;
      for (const auto& l : step.logits) row.push_back(column(l));
      hyp.rollout.logits.push_back(std::move(row));
      for (const auto& e : step.trace) hyp.rollout.trace.entries.push_back(e);
      hyp.rollout.tokens.push_back(cand.token);
      hyp.rollout.log_prob = cand.score;
      if (cand.token == kEos || t + 1 == config.t_max) {
        finished.push_back(std::move(hyp.rollout));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].log_prob > finished[best].log_prob) best = i;
  }
  return finished.at(best);
}

}  // namespace stackvs
