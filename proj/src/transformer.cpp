#include "codesumm/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace codesumm {

namespace {

constexpr double kLayerNormEps = 1e-5;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Projects [..., L, in] through [in, out] as one flattened matmul. All
// time positions share one large GEMM, which is where the architecture's
// throughput edge over step-by-step recurrence comes from.
Tensor project(const Tensor& x, const Tensor& w) {
  if (x.rank() <= 2) return x.matmul(w);
  const std::size_t in = x.shape().back();
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = w.shape()[1];
  return x.reshape({rows, in}).matmul(w).reshape(std::move(out_shape));
}

MultiHeadParams init_multi_head(const TransformerConfig& c,
                                std::mt19937_64& rng) {
  MultiHeadParams p;
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    p.w_q.push_back(xavier_uniform({c.d_model, c.head_dim_k()}, rng));
    p.w_k.push_back(xavier_uniform({c.d_model, c.head_dim_k()}, rng));
    p.w_v.push_back(xavier_uniform({c.d_model, c.head_dim_v()}, rng));
  }
  p.w_o = xavier_uniform({c.n_heads * c.head_dim_v(), c.d_model}, rng);
  return p;
}

FeedForwardParams init_ffn(const TransformerConfig& c, std::mt19937_64& rng) {
  FeedForwardParams p;
  p.w1 = xavier_uniform({c.d_model, c.d_ff}, rng);
  p.b1 = Tensor::zeros({c.d_ff}, true);
  p.w2 = xavier_uniform({c.d_ff, c.d_model}, rng);
  p.b2 = Tensor::zeros({c.d_model}, true);
  return p;
}

LayerNormParams init_norm(std::size_t d, std::mt19937_64& rng) {
  (void)rng;
  LayerNormParams p;
  p.gain = Tensor::full({d}, 1.0, true);
  p.bias = Tensor::zeros({d}, true);
  return p;
}

void collect_multi_head(const std::string& prefix, const MultiHeadParams& p,
                        std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t h = 0; h < p.w_q.size(); ++h) {
    const std::string hs = std::to_string(h);
    out.emplace_back(prefix + ".w_q." + hs, p.w_q[h]);
    out.emplace_back(prefix + ".w_k." + hs, p.w_k[h]);
    out.emplace_back(prefix + ".w_v." + hs, p.w_v[h]);
  }
  out.emplace_back(prefix + ".w_o", p.w_o);
}

void collect_ffn(const std::string& prefix, const FeedForwardParams& p,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".w1", p.w1);
  out.emplace_back(prefix + ".b1", p.b1);
  out.emplace_back(prefix + ".w2", p.w2);
  out.emplace_back(prefix + ".b2", p.b2);
}

void collect_norm(const std::string& prefix, const LayerNormParams& p,
                  std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

// [rows, 1, cols] pad mask over the key axis.
Tensor key_pad_mask(const IdMatrix& keys) {
  std::vector<double> m(keys.rows * keys.cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = keys.mask[i] ? 1.0 : 0.0;
  return Tensor::from_values({keys.rows, 1, keys.cols}, std::move(m));
}

// [rows, len, len] causal-and-pad mask for decoder self-attention.
Tensor causal_pad_mask(const IdMatrix& tgt) {
  const std::size_t b = tgt.rows;
  const std::size_t len = tgt.cols;
  std::vector<double> m(b * len * len, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t q = 0; q < len; ++q) {
      for (std::size_t k = 0; k <= q; ++k) {
        if (tgt.live(r, k)) m[(r * len + q) * len + k] = 1.0;
      }
    }
  }
  return Tensor::from_values({b, len, len}, std::move(m));
}

}  // namespace

void TransformerConfig::validate() const {
  require(src_vocab_size > 0 && tgt_vocab_size > 0,
          "transformer config: vocab sizes must be positive");
  require(d_model > 0 && n_heads > 0 && d_ff > 0,
          "transformer config: dimensions must be positive");
  require(d_k > 0 || d_model % n_heads == 0,
          "transformer config: d_k unset and n_heads does not divide d_model");
  require(d_v > 0 || d_model % n_heads == 0,
          "transformer config: d_v unset and n_heads does not divide d_model");
  require(dropout >= 0.0 && dropout < 1.0,
          "transformer config: dropout must lie in [0, 1)");
  require(max_len >= 100 && max_len >= 14,
          "transformer config: max_len must cover the method cap (100)");
}

Tensor positional_encoding(std::size_t max_len, std::size_t d_model) {
  require(max_len > 0 && d_model > 0,
          "positional_encoding: dimensions must be positive");
  std::vector<double> table(max_len * d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double rate =
          std::pow(10000.0, (double)i / (double)d_model);
      table[pos * d_model + i] = std::sin((double)pos / rate);
      if (i + 1 < d_model) {
        table[pos * d_model + i + 1] = std::cos((double)pos / rate);
      }
    }
  }
  return Tensor::from_values({max_len, d_model}, std::move(table));
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& mask,
                            std::vector<double>* weights_out) {
  require(q.rank() >= 2 && k.rank() >= 2 && v.rank() >= 2,
          "attention: operands must have rank >= 2");
  const std::size_t d_k = q.shape().back();
  require(k.shape().back() == d_k,
          "attention: query and key widths disagree: " + shape_str(q.shape()) +
              " vs " + shape_str(k.shape()));
  require(k.shape()[k.rank() - 2] == v.shape()[v.rank() - 2],
          "attention: key and value counts disagree: " + shape_str(k.shape()) +
              " vs " + shape_str(v.shape()));

  Tensor scores = q.matmul(k.transpose()) * (1.0 / std::sqrt((double)d_k));
  if (mask.defined()) {
    // every query row must keep at least one source
    const Shape& ms = mask.shape();
    const std::size_t lk = ms.back();
    const std::size_t rows = mask.size() / lk;
    for (std::size_t r = 0; r < rows; ++r) {
      bool any = false;
      for (std::size_t j = 0; j < lk; ++j) {
        any = any || mask.values()[r * lk + j] != 0.0;
      }
      require(any, "attention: a query row has every source masked");
    }
    scores = scores.masked_fill(mask, masked_fill_value());
  }
  Tensor weights = scores.softmax(scores.rank() - 1);
  if (weights_out) *weights_out = weights.values();
  return weights.matmul(v);
}

Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in,
                            const Tensor& k_in, const Tensor& v_in,
                            const Tensor& mask, AttentionCapture* capture) {
  const std::size_t n_heads = params.w_q.size();
  require(n_heads > 0, "multi_head_attention: no heads");
  if (capture) {
    capture->head_weights.assign(n_heads, {});
    capture->batch = q_in.rank() == 3 ? q_in.shape()[0] : 1;
    capture->l_q = q_in.shape()[q_in.rank() - 2];
    capture->l_k = k_in.shape()[k_in.rank() - 2];
  }
  // flatten each distinct input once; q, k and v usually alias in
  // self-attention and then share one buffer
  auto flat = [](const Tensor& t) {
    if (t.rank() <= 2) return t;
    return t.reshape({t.size() / t.shape().back(), t.shape().back()});
  };
  auto same = [](const Tensor& a, const Tensor& b) {
    return &a.values() == &b.values();
  };
  Tensor qf = flat(q_in);
  Tensor kf = same(k_in, q_in) ? qf : flat(k_in);
  Tensor vf = same(v_in, q_in) ? qf : (same(v_in, k_in) ? kf : flat(v_in));
  auto shaped = [](Tensor flat2, const Tensor& like, std::size_t width) {
    if (like.rank() <= 2) return flat2;
    Shape s = like.shape();
    s.back() = width;
    return flat2.reshape(std::move(s));
  };

  std::vector<Tensor> heads(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t dk = params.w_q[h].shape()[1];
    const std::size_t dv = params.w_v[h].shape()[1];
    Tensor head = scaled_dot_attention(
        shaped(qf.matmul(params.w_q[h]), q_in, dk),
        shaped(kf.matmul(params.w_k[h]), k_in, dk),
        shaped(vf.matmul(params.w_v[h]), v_in, dv), mask,
        capture ? &capture->head_weights[h] : nullptr);
    heads[h] = head;
  }
  Tensor merged =
      n_heads == 1 ? heads[0] : Tensor::concat(heads, q_in.rank() - 1);
  return project(merged, params.w_o);
}

TransformerModel::TransformerModel(TransformerConfig config,
                                   std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  params_.src_embed = uniform_init({config_.src_vocab_size, config_.d_model},
                                   -0.08, 0.08, rng);
  params_.tgt_embed = uniform_init({config_.tgt_vocab_size, config_.d_model},
                                   -0.08, 0.08, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    EncoderLayerParams enc;
    enc.self_attn = init_multi_head(config_, rng);
    enc.norm1 = init_norm(config_.d_model, rng);
    enc.ffn = init_ffn(config_, rng);
    enc.norm2 = init_norm(config_.d_model, rng);
    params_.encoder_layers.push_back(std::move(enc));

    DecoderLayerParams dec;
    dec.self_attn = init_multi_head(config_, rng);
    dec.norm1 = init_norm(config_.d_model, rng);
    dec.cross_attn = init_multi_head(config_, rng);
    dec.norm2 = init_norm(config_.d_model, rng);
    dec.ffn = init_ffn(config_, rng);
    dec.norm3 = init_norm(config_.d_model, rng);
    params_.decoder_layers.push_back(std::move(dec));
  }
  params_.w_out =
      xavier_uniform({config_.d_model, config_.tgt_vocab_size}, rng);
  params_.b_out = Tensor::zeros({config_.tgt_vocab_size}, true);
  positional_ = positional_encoding(config_.max_len, config_.d_model);
}

TransformerModel::TransformerModel(TransformerConfig config,
                                   TransformerParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  positional_ = positional_encoding(config_.max_len, config_.d_model);
}

std::vector<std::pair<std::string, Tensor>>
TransformerModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("src_embed", params_.src_embed);
  out.emplace_back("tgt_embed", params_.tgt_embed);
  for (std::size_t l = 0; l < params_.encoder_layers.size(); ++l) {
    const auto& enc = params_.encoder_layers[l];
    const std::string p = "enc." + std::to_string(l);
    collect_multi_head(p + ".self", enc.self_attn, out);
    collect_norm(p + ".norm1", enc.norm1, out);
    collect_ffn(p + ".ffn", enc.ffn, out);
    collect_norm(p + ".norm2", enc.norm2, out);
  }
  for (std::size_t l = 0; l < params_.decoder_layers.size(); ++l) {
    const auto& dec = params_.decoder_layers[l];
    const std::string p = "dec." + std::to_string(l);
    collect_multi_head(p + ".self", dec.self_attn, out);
    collect_norm(p + ".norm1", dec.norm1, out);
    collect_multi_head(p + ".cross", dec.cross_attn, out);
    collect_norm(p + ".norm2", dec.norm2, out);
    collect_ffn(p + ".ffn", dec.ffn, out);
    collect_norm(p + ".norm3", dec.norm3, out);
  }
  out.emplace_back("w_out", params_.w_out);
  out.emplace_back("b_out", params_.b_out);
  return out;
}

std::size_t TransformerModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : named_parameters()) total += t.size();
  return total;
}

std::size_t TransformerModel::count_parameters(
    const TransformerConfig& config) {
  const std::size_t d = config.d_model;
  const std::size_t h = config.n_heads;
  const std::size_t dk = config.head_dim_k();
  const std::size_t dv = config.head_dim_v();
  const std::size_t attn = h * (2 * d * dk + d * dv) + h * dv * d;
  const std::size_t ffn = d * config.d_ff + config.d_ff + config.d_ff * d + d;
  const std::size_t norm = 2 * d;
  const std::size_t enc_layer = attn + ffn + 2 * norm;
  const std::size_t dec_layer = 2 * attn + ffn + 3 * norm;
  return (config.src_vocab_size + config.tgt_vocab_size) * d  // embeddings
         + config.n_layers * (enc_layer + dec_layer)
         + (d + 1) * config.tgt_vocab_size;  // output projection + bias
}

Tensor TransformerModel::embed_sequence(const Tensor& table,
                                        const IdMatrix& ids, double dropout,
                                        std::mt19937_64* rng) const {
  if (ids.cols > config_.max_len) {
    throw std::invalid_argument(
        "transformer: sequence of length " + std::to_string(ids.cols) +
        " exceeds max_len " + std::to_string(config_.max_len));
  }
  Tensor x = table.lookup(ids.ids, {ids.rows, ids.cols}) *
             std::sqrt((double)config_.d_model);
  if (config_.use_positional) {
    std::vector<double> pe(positional_.values().begin(),
                           positional_.values().begin() +
                               ids.cols * config_.d_model);
    x = x + Tensor::from_values({ids.cols, config_.d_model}, std::move(pe));
  }
  if (dropout > 0.0) x = x.dropout(dropout, *rng);
  return x;
}

Tensor TransformerModel::feed_forward(const FeedForwardParams& p,
                                      const Tensor& x) const {
  if (x.rank() <= 2) {
    return (x.matmul(p.w1) + p.b1).relu().matmul(p.w2) + p.b2;
  }
  const std::size_t d = x.shape().back();
  Tensor flat = x.reshape({x.size() / d, d});
  Tensor y = (flat.matmul(p.w1) + p.b1).relu().matmul(p.w2) + p.b2;
  return y.reshape(x.shape());
}

Tensor TransformerModel::encoder_forward(const IdMatrix& src, double dropout,
                                         std::mt19937_64* rng) const {
  Tensor x = embed_sequence(params_.src_embed, src, dropout, rng);
  Tensor mask = key_pad_mask(src);
  for (const auto& layer : params_.encoder_layers) {
    Tensor attn = multi_head_attention(layer.self_attn, x, x, x, mask);
    if (dropout > 0.0) attn = attn.dropout(dropout, *rng);
    x = (x + attn).layer_norm(layer.norm1.gain, layer.norm1.bias,
                              kLayerNormEps);
    Tensor ff = feed_forward(layer.ffn, x);
    if (dropout > 0.0) ff = ff.dropout(dropout, *rng);
    x = (x + ff).layer_norm(layer.norm2.gain, layer.norm2.bias,
                            kLayerNormEps);
  }
  return x;
}

Tensor TransformerModel::decoder_forward(const IdMatrix& tgt,
                                         const Tensor& memory,
                                         const IdMatrix& src, double dropout,
                                         std::mt19937_64* rng,
                                         DecoderCapture* capture) const {
  Tensor x = embed_sequence(params_.tgt_embed, tgt, dropout, rng);
  Tensor self_mask = causal_pad_mask(tgt);
  Tensor cross_mask = key_pad_mask(src);
  if (capture) capture->layers.assign(params_.decoder_layers.size(), {});
  for (std::size_t l = 0; l < params_.decoder_layers.size(); ++l) {
    const auto& layer = params_.decoder_layers[l];
    Tensor self_attn =
        multi_head_attention(layer.self_attn, x, x, x, self_mask);
    if (dropout > 0.0) self_attn = self_attn.dropout(dropout, *rng);
    x = (x + self_attn)
            .layer_norm(layer.norm1.gain, layer.norm1.bias, kLayerNormEps);
    Tensor cross =
        multi_head_attention(layer.cross_attn, x, memory, memory, cross_mask,
                             capture ? &capture->layers[l] : nullptr);
    if (dropout > 0.0) cross = cross.dropout(dropout, *rng);
    x = (x + cross)
            .layer_norm(layer.norm2.gain, layer.norm2.bias, kLayerNormEps);
    Tensor ff = feed_forward(layer.ffn, x);
    if (dropout > 0.0) ff = ff.dropout(dropout, *rng);
    x = (x + ff).layer_norm(layer.norm3.gain, layer.norm3.bias,
                            kLayerNormEps);
  }
  return project(x, params_.w_out) + params_.b_out;
}

LossInfo TransformerModel::teacher_forced_loss(const Batch& batch,
                                               double dropout,
                                               std::mt19937_64* rng) const {
  const std::size_t b = batch.tgt.rows;
  const std::size_t tlen = batch.tgt.cols;
  require(tlen >= 2, "teacher_forced_loss: target frame too short");

  // decoder input drops the last column; gold targets drop the first
  std::vector<int> in_ids(b * (tlen - 1));
  std::vector<int> gold(b * (tlen - 1));
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t t = 0; t + 1 < tlen; ++t) {
      in_ids[r * (tlen - 1) + t] = batch.tgt.at(r, t);
      gold[r * (tlen - 1) + t] = batch.tgt.at(r, t + 1);
    }
  }
  IdMatrix dec_in = IdMatrix::from_ids(std::move(in_ids), b, tlen - 1);
  Tensor memory = encoder_forward(batch.src, dropout, rng);
  Tensor logits = decoder_forward(dec_in, memory, batch.src, dropout, rng);
  Tensor flat = logits.reshape({b * (tlen - 1), config_.tgt_vocab_size});
  LossInfo info;
  info.loss = cross_entropy(flat, gold, Vocabulary::kPadId, &info.token_count);
  return info;
}

}  // namespace codesumm
