#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "codesumm/corpus.hpp"
#include "codesumm/tensor.hpp"

namespace codesumm {

struct TransformerConfig {
  std::size_t n_layers = 1;
  std::size_t d_model = 256;
  std::size_t n_heads = 8;
  std::size_t d_k = 0;  // 0 resolves to d_model / n_heads
  std::size_t d_v = 0;
  std::size_t d_ff = 512;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;
  double dropout = 0.1;
  std::size_t max_len = 128;  // positional-encoding horizon
  bool use_positional = true;

  std::size_t head_dim_k() const { return d_k ? d_k : d_model / n_heads; }
  std::size_t head_dim_v() const { return d_v ? d_v : d_model / n_heads; }
  void validate() const;
};

/// Per-head projection matrices W_i^Q, W_i^K [d_model, d_k] and
/// W_i^V [d_model, d_v], plus the output projection W^O [h*d_v, d_model].
struct MultiHeadParams {
  std::vector<Tensor> w_q, w_k, w_v;
  Tensor w_o;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct LayerNormParams {
  Tensor gain, bias;
};

struct EncoderLayerParams {
  MultiHeadParams self_attn;
  LayerNormParams norm1;
  FeedForwardParams ffn;
  LayerNormParams norm2;
};

struct DecoderLayerParams {
  MultiHeadParams self_attn;
  LayerNormParams norm1;
  MultiHeadParams cross_attn;
  LayerNormParams norm2;
  FeedForwardParams ffn;
  LayerNormParams norm3;
};

struct TransformerParams {
  Tensor src_embed, tgt_embed;  // [vocab, d_model]
  std::vector<EncoderLayerParams> encoder_layers;
  std::vector<DecoderLayerParams> decoder_layers;
  Tensor w_out, b_out;  // [d_model, tgt_vocab], [tgt_vocab]
};

/// Fixed sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d_model)),
/// PE[pos, 2i+1] = cos of the same argument.
Tensor positional_encoding(std::size_t max_len, std::size_t d_model);

/// Post-softmax weights copied out of one attention call: head_weights[h]
/// holds a flattened [batch, l_q, l_k] grid.
struct AttentionCapture {
  std::vector<std::vector<double>> head_weights;
  std::size_t batch = 0, l_q = 0, l_k = 0;
};

/// Cross-attention weights per decoder layer.
struct DecoderCapture {
  std::vector<AttentionCapture> layers;
};

/// softmax(Q K^T / sqrt(d_k) + mask) V. The mask (when defined) has the
/// same rank as the score grid with every axis equal or 1; masked
/// positions get exactly zero weight, and a query row with every source
/// masked is a contract error. `weights_out`, when non-null, receives the
/// post-softmax weights.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& mask,
                            std::vector<double>* weights_out = nullptr);

/// head_i = scaled_dot_attention(q W_i^Q, k W_i^K, v W_i^V); the heads are
/// concatenated and projected through W^O.
Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in,
                            const Tensor& k_in, const Tensor& v_in,
                            const Tensor& mask,
                            AttentionCapture* capture = nullptr);

/// N-layer encoder/decoder stacks with multi-head attention, position-wise
/// feed-forward sublayers, and post-norm residuals:
/// LayerNorm(x + Dropout(Sublayer(x))).
class TransformerModel {
 public:
  TransformerModel(TransformerConfig config, std::uint64_t init_seed);
  TransformerModel(TransformerConfig config, TransformerParams params);

  const TransformerConfig& config() const { return config_; }
  TransformerParams& params() { return params_; }
  const TransformerParams& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  static std::size_t count_parameters(const TransformerConfig& config);

  /// Embedding * sqrt(d_model) + positional encoding, then the encoder
  /// stack. Sequences longer than max_len are a length error.
  Tensor encoder_forward(const IdMatrix& src, double dropout,
                         std::mt19937_64* rng) const;

  /// Masked self-attention (causal and pad), cross-attention over the
  /// encoder memory, feed-forward; then the final vocabulary projection.
  Tensor decoder_forward(const IdMatrix& tgt, const Tensor& memory,
                         const IdMatrix& src, double dropout,
                         std::mt19937_64* rng,
                         DecoderCapture* capture = nullptr) const;

  LossInfo teacher_forced_loss(const Batch& batch, double dropout,
                               std::mt19937_64* rng) const;

 private:
  Tensor embed_sequence(const Tensor& table, const IdMatrix& ids,
                        double dropout, std::mt19937_64* rng) const;
  Tensor feed_forward(const FeedForwardParams& p, const Tensor& x) const;

  TransformerConfig config_;
  TransformerParams params_;
  Tensor positional_;  // [max_len, d_model], constant
};

}  // namespace codesumm
