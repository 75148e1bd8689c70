#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "codesumm/corpus.hpp"
#include "codesumm/tensor.hpp"

namespace codesumm {

struct Seq2SeqConfig {
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  std::size_t embed_dim = 256;
  std::size_t hidden_dim = 256;  // per direction
  double dropout = 0.1;
  std::size_t max_decode_len = 14;  // comment cap 13 plus the stop slot

  void validate() const;
};

struct GruCellParams {
  Tensor w_xr, w_xz, w_xn;  // [input_dim, hidden]
  Tensor w_hr, w_hz, w_hn;  // [hidden, hidden]
  Tensor b_r, b_z, b_xn, b_hn;
};

struct Seq2SeqParams {
  Tensor src_embed, tgt_embed;
  GruCellParams enc_fwd, enc_bwd, dec;
  Tensor w_init;  // [2*hidden, hidden]
  Tensor w_attn;  // [hidden, 2*hidden], bilinear attention bridge
  Tensor w_out;   // [3*hidden, tgt_vocab]: concat(context, state) -> logits
};

struct EncoderStates {
  Tensor states;      // [batch, src_len, 2*hidden]
  Tensor init_state;  // [batch, hidden]
};

/// Bidirectional GRU encoder, unidirectional GRU decoder initialized from
/// the projected final encoder states, multiplicative attention, and a
/// concat-then-project output layer.
class Seq2SeqModel {
 public:
  Seq2SeqModel(Seq2SeqConfig config, std::uint64_t init_seed);
  Seq2SeqModel(Seq2SeqConfig config, Seq2SeqParams params);

  const Seq2SeqConfig& config() const { return config_; }
  Seq2SeqParams& params() { return params_; }
  const Seq2SeqParams& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  static std::size_t count_parameters(const Seq2SeqConfig& config);

  /// Runs both directions with pad steps carrying the previous state
  /// through; init_state is the projected concat of the two final states.
  EncoderStates encode(const IdMatrix& src, double dropout,
                       std::mt19937_64* rng) const;

  /// score_j = dec_state . W_a . enc_state_j, softmaxed over unmasked j.
  /// Returns [batch, src_len]; a fully masked row is a contract error.
  Tensor attention_weights(const Tensor& dec_state, const Tensor& enc_states,
                           const IdMatrix& src) const;

  struct StepResult {
    Tensor logits;   // [batch, tgt_vocab]
    Tensor state;    // [batch, hidden]
    Tensor weights;  // [batch, src_len]
  };
  StepResult decode_step(const std::vector<int>& prev_ids,
                         const Tensor& dec_state, const Tensor& enc_states,
                         const IdMatrix& src, double dropout,
                         std::mt19937_64* rng) const;

  /// Mean token cross-entropy over non-pad target positions, feeding gold
  /// previous tokens.
  LossInfo teacher_forced_loss(const Batch& batch, double dropout,
                               std::mt19937_64* rng) const;

 private:
  Tensor gru_step(const GruCellParams& cell, const Tensor& x,
                  const Tensor& h) const;
  Tensor gru_step_pre(const GruCellParams& cell, const Tensor& xr,
                      const Tensor& xz, const Tensor& xn,
                      const Tensor& h) const;
  Seq2SeqConfig config_;
  Seq2SeqParams params_;
};

}  // namespace codesumm
