#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "stackvs/decoder_cell.hpp"
#include "stackvs/rng.hpp"

namespace stackvs {

// Fixed special token ids shared by vocabularies and checkpoints.
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

/// Attention weights of one stage at one time step.
struct TraceEntry {
  std::size_t stage = 0;  // 0 is the coarse stage
  std::size_t t = 0;
  Vectord alpha_v;
  Vectord alpha_s;
  // L1 mass of FC_v(v_hat) over the L1 mass of FC_v(v_hat) and FC_s(e_hat).
  double ratio = 0.5;
};

struct AttentionTrace {
  std::size_t n_stages = 0;
  std::size_t n_v = 0;
  std::size_t n_e = 0;
  std::vector<TraceEntry> entries;  // in evaluation order: t-major, stage-minor
};

/// Image inputs recorded on a tape: V0 as a constant, E0 gathered from the
/// trainable attribute table.
struct ImageInputs {
  Vard visual;    // N_v x d_v
  Vard semantic;  // N_e x d_e
};

ImageInputs bind_image(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                       const Tensord& features, std::span<const std::size_t> attribute_ids);

/// Recurrent state of the whole stack between time steps.
struct DecoderState {
  std::vector<DecoderCellState> stages;
  Vard h_final;  // final-stage language hidden at t-1 (zero at t=0)
  std::size_t t = 0;
};

DecoderState initial_decoder_state(Taped& tape, const StackConfig& config);

struct StepResult {
  std::vector<Vard> logits;          // per stage
  std::vector<Vard> probs;           // per stage, softmax of logits
  std::vector<StageCarry> consumed;  // carry read by each stage
  std::vector<StageCarry> produced;  // carry written by each stage
  std::vector<TraceEntry> trace;
};

/// Runs all stages for one time step, feeding `input_token` as the previous word.
/// Stage 0 reads (h_final, 0, 0); stage i > 0 reads stage i-1's carry.
StepResult decoder_step(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                        const ImageInputs& image, DecoderState& state, std::size_t input_token);

struct TeacherForced {
  std::vector<std::vector<Vard>> probs;  // [stage][t]
  std::vector<std::size_t> inputs;       // previous-word token fed at each t
  AttentionTrace trace;
};

/// Unrolls over `gold` (content tokens followed by <eos>). With probability
/// `ss_prob` the previous word at t > 0 is replaced by a draw from the final
/// stage's distribution at t-1.
TeacherForced forward_teacher_forced(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                                     const Tensord& features, std::span<const std::size_t> attribute_ids,
                                     std::span<const std::size_t> gold, double ss_prob, Rng& rng);

struct Rollout {
  std::vector<std::size_t> tokens;           // ends with <eos> or stops at t_max
  std::vector<std::vector<Vectord>> logits;  // [t][stage]
  double log_prob = 0.0;                     // sum of final-stage log-probabilities
  AttentionTrace trace;
};

/// Picks the next token from the final-stage distribution at step t.
using TokenChooser = std::function<std::size_t(std::size_t t, const Vectord& probs)>;

/// Autoregressive rollout on an existing tape; `log_prob` is differentiable.
struct TapedRollout {
  Rollout rollout;
  Vard log_prob;
};

TapedRollout rollout_on_tape(Taped& tape, const StackConfig& config, const ModelParamsT<Vard>& params,
                             const ImageInputs& image, const TokenChooser& choose);

/// Argmax with ties broken toward the lowest content id, then the lowest special id.
std::size_t greedy_choice(const Vectord& probs);

Rollout decode_greedy(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids);
Rollout decode_sample(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids,
                      Rng& rng);
Rollout decode_beam(const Model& model, const Tensord& features, std::span<const std::size_t> attribute_ids,
                    std::size_t beam_width);

}  // namespace stackvs
