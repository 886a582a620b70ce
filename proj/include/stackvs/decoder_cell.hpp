#pragma once

#include "stackvs/model.hpp"

namespace stackvs {

/// Recurrent state owned by one stage: the visual, semantic and language LSTMs.
struct DecoderCellState {
  LstmState state_v;
  LstmState state_s;
  LstmState state_l;
};

/// Message passed from stage i-1 to stage i at the same time step.
struct StageCarry {
  Vard h_lang;  // language LSTM hidden (d_h)
  Vard v_hat;   // attended visual feature (d_v)
  Vard e_hat;   // attended attribute embedding (d_e)
};

struct CellOutput {
  DecoderCellState state;
  Vard logits;   // d_p, softmax applied by the caller
  Vard alpha_v;  // N_v
  Vard alpha_s;  // N_e
  StageCarry carry;
  Vard fc_v;  // projected attended visual feature (d_h)
  Vard fc_s;  // projected attended semantic feature (d_h)
};

/// All-zero h and c for the three LSTMs.
DecoderCellState init_cell_state(Taped& tape, const StackConfig& config);

/// Carry consumed by the coarse stage: (h_lang, 0, 0).
StageCarry coarse_carry(Taped& tape, const StackConfig& config, const Vard& h_lang);

/// One decoder cell evaluated at one time step.
///
/// Both attention LSTMs read [word_emb, carry_in.h_lang]. Each branch scores
/// its features with the hidden states of both branches, so the visual
/// weights depend on the semantic LSTM and vice versa. The language LSTM
/// reads FC_v(v_hat) + FC_s(e_hat) + h_v + h_s.
///
/// `visual` is N_v x d_v, `semantic` is N_e x d_e.
CellOutput cell_step(const DecoderCellParamsT<Vard>& p, const DecoderCellState& s, const Vard& word_emb,
                     const Vard& visual, const Vard& semantic, const StageCarry& carry_in);

}  // namespace stackvs
