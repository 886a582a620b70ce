#include "stackvs/decoder_cell.hpp"

namespace stackvs {

DecoderCellState init_cell_state(Taped& tape, const StackConfig& config) {
  return {zero_lstm_state(tape, config.d_h), zero_lstm_state(tape, config.d_h), zero_lstm_state(tape, config.d_h)};
}

StageCarry coarse_carry(Taped& tape, const StackConfig& config, const Vard& h_lang) {
  return {h_lang, tape.leaf(Tensord::zeros({config.d_v})), tape.leaf(Tensord::zeros({config.d_e}))};
}

CellOutput cell_step(const DecoderCellParamsT<Vard>& p, const DecoderCellState& s, const Vard& word_emb,
                     const Vard& visual, const Vard& semantic, const StageCarry& carry_in) {
  const std::size_t d_h = p.lstm_l.recurrent_weights.value().dim(1);
  if (carry_in.h_lang.shape() != Shape{d_h}) {
    throw ShapeError("cell_step: carry hidden " + shape_string(carry_in.h_lang.shape()) + ", expected [" +
                     std::to_string(d_h) + "]");
  }
  if (visual.value().rank() != 2 || semantic.value().rank() != 2) {
    throw ShapeError("cell_step: visual and semantic features must be rank 2");
  }
  if (carry_in.v_hat.shape() != Shape{visual.value().dim(1)} ||
      carry_in.e_hat.shape() != Shape{semantic.value().dim(1)}) {
    throw ShapeError("cell_step: carry attended vectors do not match feature widths");
  }

  Vard x = concat(word_emb, carry_in.h_lang);
  LstmState v = lstm_step(p.lstm_v, s.state_v, x);
  LstmState sem = lstm_step(p.lstm_s, s.state_s, x);

  Vard alpha_v = attention_weights(attention_logits(p.attn_v, visual, carry_in.v_hat, v.h, sem.h));
  Vard v_hat = attend(alpha_v, visual);
  Vard alpha_s = attention_weights(attention_logits(p.attn_s, semantic, carry_in.e_hat, v.h, sem.h));
  Vard e_hat = attend(alpha_s, semantic);

  Vard fc_v = add(matmul(p.fc_v_weight, v_hat), p.fc_v_bias);
  Vard fc_s = add(matmul(p.fc_s_weight, e_hat), p.fc_s_bias);
  Vard x_lang = add(add(fc_v, fc_s), add(v.h, sem.h));
  LstmState lang = lstm_step(p.lstm_l, s.state_l, x_lang);

  Vard logits = matmul(p.out_proj, lang.h);
  return {{v, sem, lang}, logits, alpha_v, alpha_s, {lang.h, v_hat, e_hat}, fc_v, fc_s};
}

}  // namespace stackvs
