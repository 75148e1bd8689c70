#include "codesumm/seq2seq.hpp"

#include <stdexcept>

namespace codesumm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

GruCellParams init_gru_cell(std::size_t input_dim, std::size_t hidden,
                            std::mt19937_64& rng) {
  GruCellParams c;
  c.w_xr = xavier_uniform({input_dim, hidden}, rng);
  c.w_xz = xavier_uniform({input_dim, hidden}, rng);
  c.w_xn = xavier_uniform({input_dim, hidden}, rng);
  c.w_hr = xavier_uniform({hidden, hidden}, rng);
  c.w_hz = xavier_uniform({hidden, hidden}, rng);
  c.w_hn = xavier_uniform({hidden, hidden}, rng);
  c.b_r = Tensor::zeros({hidden}, true);
  c.b_z = Tensor::zeros({hidden}, true);
  c.b_xn = Tensor::zeros({hidden}, true);
  c.b_hn = Tensor::zeros({hidden}, true);
  return c;
}

void collect_gru(const std::string& prefix, const GruCellParams& c,
                 std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".w_xr", c.w_xr);
  out.emplace_back(prefix + ".w_xz", c.w_xz);
  out.emplace_back(prefix + ".w_xn", c.w_xn);
  out.emplace_back(prefix + ".w_hr", c.w_hr);
  out.emplace_back(prefix + ".w_hz", c.w_hz);
  out.emplace_back(prefix + ".w_hn", c.w_hn);
  out.emplace_back(prefix + ".b_r", c.b_r);
  out.emplace_back(prefix + ".b_z", c.b_z);
  out.emplace_back(prefix + ".b_xn", c.b_xn);
  out.emplace_back(prefix + ".b_hn", c.b_hn);
}

// Dense [batch, hidden] step mask so gating stays a same-shape product.
Tensor step_mask(const IdMatrix& src, std::size_t col, std::size_t hidden) {
  std::vector<double> m(src.rows * hidden);
  for (std::size_t r = 0; r < src.rows; ++r) {
    const double v = src.live(r, col) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < hidden; ++j) m[r * hidden + j] = v;
  }
  return Tensor::from_values({src.rows, hidden}, std::move(m));
}

// One flattened GEMM for [B, L, in] x [in, out].
Tensor project(const Tensor& x, const Tensor& w) {
  if (x.rank() <= 2) return x.matmul(w);
  const std::size_t in = x.shape().back();
  const std::size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = w.shape()[1];
  return x.reshape({rows, in}).matmul(w).reshape(std::move(out_shape));
}

// Input-side gate projections for a whole sequence, batched over time.
// Only the hidden-state chain has to stay sequential.
struct GateInputs {
  Tensor r, z, n;  // each [B, L, H]

  GateInputs(const GruCellParams& cell, const Tensor& x_all)
      : r(project(x_all, cell.w_xr)),
        z(project(x_all, cell.w_xz)),
        n(project(x_all, cell.w_xn)) {}

  struct Step {
    Tensor r, z, n;
  };
  Step at(std::size_t t) const {
    return {r.select(1, t), z.select(1, t), n.select(1, t)};
  }
};

}  // namespace

void Seq2SeqConfig::validate() const {
  require(src_vocab_size > 0 && tgt_vocab_size > 0,
          "seq2seq config: vocab sizes must be positive");
  require(embed_dim > 0 && hidden_dim > 0,
          "seq2seq config: dimensions must be positive");
  require(dropout >= 0.0 && dropout < 1.0,
          "seq2seq config: dropout must lie in [0, 1)");
  require(max_decode_len >= 14,
          "seq2seq config: max_decode_len must be at least 14");
}

Seq2SeqModel::Seq2SeqModel(Seq2SeqConfig config, std::uint64_t init_seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const std::size_t h = config_.hidden_dim;
  params_.src_embed =
      uniform_init({config_.src_vocab_size, config_.embed_dim}, -0.08, 0.08,
                   rng);
  params_.tgt_embed =
      uniform_init({config_.tgt_vocab_size, config_.embed_dim}, -0.08, 0.08,
                   rng);
  params_.enc_fwd = init_gru_cell(config_.embed_dim, h, rng);
  params_.enc_bwd = init_gru_cell(config_.embed_dim, h, rng);
  params_.dec = init_gru_cell(config_.embed_dim, h, rng);
  params_.w_init = xavier_uniform({2 * h, h}, rng);
  params_.w_attn = xavier_uniform({h, 2 * h}, rng);
  params_.w_out = xavier_uniform({3 * h, config_.tgt_vocab_size}, rng);
}

Seq2SeqModel::Seq2SeqModel(Seq2SeqConfig config, Seq2SeqParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

std::vector<std::pair<std::string, Tensor>> Seq2SeqModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("src_embed", params_.src_embed);
  out.emplace_back("tgt_embed", params_.tgt_embed);
  collect_gru("enc_fwd", params_.enc_fwd, out);
  collect_gru("enc_bwd", params_.enc_bwd, out);
  collect_gru("dec", params_.dec, out);
  out.emplace_back("w_init", params_.w_init);
  out.emplace_back("w_attn", params_.w_attn);
  out.emplace_back("w_out", params_.w_out);
  return out;
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : named_parameters()) total += t.size();
  return total;
}

std::size_t Seq2SeqModel::count_parameters(const Seq2SeqConfig& config) {
  const std::size_t e = config.embed_dim;
  const std::size_t h = config.hidden_dim;
  const std::size_t cell = 3 * e * h + 3 * h * h + 4 * h;
  return (config.src_vocab_size + config.tgt_vocab_size) * e  // embeddings
         + 3 * cell                                           // two enc + dec
         + 2 * h * h                                          // w_init
         + 2 * h * h                                          // w_attn
         + 3 * h * config.tgt_vocab_size;                     // w_out
}

Tensor Seq2SeqModel::gru_step_pre(const GruCellParams& cell, const Tensor& xr,
                                  const Tensor& xz, const Tensor& xn,
                                  const Tensor& h) const {
  Tensor r = (xr + h.matmul(cell.w_hr) + cell.b_r).sigmoid();
  Tensor z = (xz + h.matmul(cell.w_hz) + cell.b_z).sigmoid();
  Tensor n = (xn + cell.b_xn + r * (h.matmul(cell.w_hn) + cell.b_hn)).tanh();
  // h' = (1 - z) * n + z * h
  return n + z * (h - n);
}

Tensor Seq2SeqModel::gru_step(const GruCellParams& cell, const Tensor& x,
                              const Tensor& h) const {
  return gru_step_pre(cell, x.matmul(cell.w_xr), x.matmul(cell.w_xz),
                      x.matmul(cell.w_xn), h);
}

EncoderStates Seq2SeqModel::encode(const IdMatrix& src, double dropout,
                                   std::mt19937_64* rng) const {
  require(src.rows > 0 && src.cols > 0, "encode: empty source batch");
  const std::size_t b = src.rows;
  const std::size_t len = src.cols;
  const std::size_t h = config_.hidden_dim;

  Tensor x_all = params_.src_embed.lookup(src.ids, {b, len});
  if (dropout > 0.0) x_all = x_all.dropout(dropout, *rng);
  const GateInputs fwd_in(params_.enc_fwd, x_all);
  const GateInputs bwd_in(params_.enc_bwd, x_all);

  std::vector<Tensor> fwd(len), bwd(len);
  Tensor hf = Tensor::zeros({b, h});
  for (std::size_t t = 0; t < len; ++t) {
    Tensor m = step_mask(src, t, h);
    const auto in = fwd_in.at(t);
    Tensor cand = gru_step_pre(params_.enc_fwd, in.r, in.z, in.n, hf);
    hf = hf + m * (cand - hf);  // pad steps carry the previous state
    fwd[t] = hf;
  }
  Tensor hb = Tensor::zeros({b, h});
  for (std::size_t t = len; t-- > 0;) {
    Tensor m = step_mask(src, t, h);
    const auto in = bwd_in.at(t);
    Tensor cand = gru_step_pre(params_.enc_bwd, in.r, in.z, in.n, hb);
    hb = hb + m * (cand - hb);
    bwd[t] = hb;
  }

  std::vector<Tensor> steps(len);
  for (std::size_t t = 0; t < len; ++t) {
    steps[t] = Tensor::concat({fwd[t], bwd[t]}, 1).reshape({b, 1, 2 * h});
  }
  EncoderStates out;
  out.states = len == 1 ? steps[0] : Tensor::concat(steps, 1);
  out.init_state =
      Tensor::concat({fwd[len - 1], bwd[0]}, 1).matmul(params_.w_init);
  return out;
}

Tensor Seq2SeqModel::attention_weights(const Tensor& dec_state,
                                       const Tensor& enc_states,
                                       const IdMatrix& src) const {
  const std::size_t b = src.rows;
  const std::size_t len = src.cols;
  for (std::size_t r = 0; r < b; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < len; ++c) any = any || src.live(r, c);
    require(any, "attention: row " + std::to_string(r) + " is fully masked");
  }
  Tensor bridged = dec_state.matmul(params_.w_attn);  // [b, 2h]
  Tensor scores = enc_states
                      .matmul(bridged.reshape({b, 2 * config_.hidden_dim, 1}))
                      .reshape({b, len});
  std::vector<double> mv(b * len);
  for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = src.mask[i] ? 1.0 : 0.0;
  Tensor mask = Tensor::from_values({b, len}, std::move(mv));
  return scores.masked_fill(mask, masked_fill_value()).softmax(1);
}

Seq2SeqModel::StepResult Seq2SeqModel::decode_step(
    const std::vector<int>& prev_ids, const Tensor& dec_state,
    const Tensor& enc_states, const IdMatrix& src, double dropout,
    std::mt19937_64* rng) const {
  const std::size_t b = src.rows;
  const std::size_t len = src.cols;
  Tensor x = params_.tgt_embed.lookup(prev_ids, {b});
  if (dropout > 0.0) x = x.dropout(dropout, *rng);

  StepResult out;
  out.state = gru_step(params_.dec, x, dec_state);
  out.weights = attention_weights(out.state, enc_states, src);
  Tensor context = out.weights.reshape({b, 1, len})
                       .matmul(enc_states)
                       .reshape({b, 2 * config_.hidden_dim});
  Tensor combined = Tensor::concat({context, out.state}, 1);
  if (dropout > 0.0) combined = combined.dropout(dropout, *rng);
  out.logits = combined.matmul(params_.w_out);
  return out;
}

LossInfo Seq2SeqModel::teacher_forced_loss(const Batch& batch, double dropout,
                                           std::mt19937_64* rng) const {
  const std::size_t b = batch.tgt.rows;
  const std::size_t tlen = batch.tgt.cols;
  require(tlen >= 2, "teacher_forced_loss: target frame too short");

  EncoderStates enc = encode(batch.src, dropout, rng);

  // teacher forcing: batch the embedding and gate projections over time
  // and defer the output projection to one flattened GEMM; only the
  // recurrent state chain advances step by step
  Tensor x_all = params_.tgt_embed.lookup(batch.tgt.ids, {b, tlen});
  if (dropout > 0.0) x_all = x_all.dropout(dropout, *rng);
  const GateInputs dec_in(params_.dec, x_all);

  Tensor state = enc.init_state;
  std::vector<Tensor> combined;
  std::vector<int> gold;
  gold.reserve(b * (tlen - 1));
  const std::size_t len = batch.src.cols;
  for (std::size_t t = 0; t + 1 < tlen; ++t) {
    const auto in = dec_in.at(t);
    state = gru_step_pre(params_.dec, in.r, in.z, in.n, state);
    Tensor weights = attention_weights(state, enc.states, batch.src);
    Tensor context = weights.reshape({b, 1, len})
                         .matmul(enc.states)
                         .reshape({b, 2 * config_.hidden_dim});
    combined.push_back(Tensor::concat({context, state}, 1));
    for (std::size_t r = 0; r < b; ++r) gold.push_back(batch.tgt.at(r, t + 1));
  }
  Tensor all =
      combined.size() == 1 ? combined[0] : Tensor::concat(combined, 0);
  if (dropout > 0.0) all = all.dropout(dropout, *rng);
  Tensor logits = all.matmul(params_.w_out);
  LossInfo info;
  info.loss =
      cross_entropy(logits, gold, Vocabulary::kPadId, &info.token_count);
  return info;
}

}  // namespace codesumm
