#include "codesumm/decoding.hpp"

#include <stdexcept>

namespace codesumm {

GreedyIds greedy_decode_ids(GreedyDecodable& session, std::size_t max_len) {
  session.begin();
  GreedyIds out;
  int prev = Vocabulary::kBosId;
  while (out.ids.size() < max_len) {
    const std::vector<double> logits = session.step(prev);
    if (logits.empty()) {
      throw std::runtime_error("greedy_decode: empty logits");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;  // ties keep the lowest id
    }
    if ((int)best == Vocabulary::kEosId) break;
    out.ids.push_back((int)best);
    prev = (int)best;
  }
  out.weights = session.attention(out.ids.size());
  return out;
}

// ---------------- transformer session ----------------

TransformerGreedySession::TransformerGreedySession(
    const TransformerModel& model, IdMatrix src)
    : model_(model), src_(std::move(src)) {}

void TransformerGreedySession::begin() {
  memory_ = model_.encoder_forward(src_, 0.0, nullptr);
  prefix_.clear();
}

std::vector<double> TransformerGreedySession::step(int prev_id) {
  prefix_.push_back(prev_id);
  IdMatrix tgt = IdMatrix::from_ids(prefix_, 1, prefix_.size());
  Tensor logits = model_.decoder_forward(tgt, memory_, src_, 0.0, nullptr);
  const std::size_t v = logits.shape().back();
  const std::size_t last = (prefix_.size() - 1) * v;
  return std::vector<double>(logits.values().begin() + last,
                             logits.values().begin() + last + v);
}

AttentionGrid TransformerGreedySession::attention(std::size_t n_generated) {
  const std::size_t n_layers = model_.config().n_layers;
  const std::size_t n_heads = model_.config().n_heads;
  AttentionGrid grid(n_layers);
  for (auto& layer : grid) layer.resize(n_heads);
  if (n_generated == 0) return grid;

  DecoderCapture capture;
  IdMatrix tgt = IdMatrix::from_ids(prefix_, 1, prefix_.size());
  model_.decoder_forward(tgt, memory_, src_, 0.0, nullptr, &capture);
  // query row t predicted generated token t
  for (std::size_t l = 0; l < n_layers; ++l) {
    const AttentionCapture& cap = capture.layers[l];
    for (std::size_t h = 0; h < n_heads; ++h) {
      auto& rows = grid[l][h];
      rows.resize(n_generated);
      for (std::size_t t = 0; t < n_generated; ++t) {
        rows[t].assign(cap.head_weights[h].begin() + t * cap.l_k,
                       cap.head_weights[h].begin() + (t + 1) * cap.l_k);
      }
    }
  }
  return grid;
}

// ---------------- recurrent session ----------------

Seq2SeqGreedySession::Seq2SeqGreedySession(const Seq2SeqModel& model,
                                           IdMatrix src)
    : model_(model), src_(std::move(src)) {}

void Seq2SeqGreedySession::begin() {
  enc_ = model_.encode(src_, 0.0, nullptr);
  state_ = enc_.init_state;
  step_weights_.clear();
}

std::vector<double> Seq2SeqGreedySession::step(int prev_id) {
  auto result =
      model_.decode_step({prev_id}, state_, enc_.states, src_, 0.0, nullptr);
  state_ = result.state;
  step_weights_.push_back(result.weights.values());
  return result.logits.values();
}

AttentionGrid Seq2SeqGreedySession::attention(std::size_t n_generated) {
  AttentionGrid grid(1);
  grid[0].resize(1);
  auto& rows = grid[0][0];
  rows.assign(step_weights_.begin(), step_weights_.begin() + n_generated);
  return grid;
}

// ---------------- whole-example decoding ----------------

namespace {

SummaryResult finish_decode(GreedyDecodable& session,
                            const std::vector<std::string>& src_tokens,
                            const Vocabulary& tgt_vocab, std::size_t max_len) {
  GreedyIds raw = greedy_decode_ids(session, max_len);
  SummaryResult out;
  for (int id : raw.ids) out.tokens.push_back(tgt_vocab.token_of(id));
  out.attention.source_tokens = src_tokens;
  out.attention.generated_tokens = out.tokens;
  out.attention.weights = std::move(raw.weights);
  return out;
}

IdMatrix source_matrix(const TokenSequence& src) {
  if (src.ids.empty()) {
    throw std::invalid_argument("greedy_decode: empty source sequence");
  }
  return IdMatrix::from_ids(src.ids, 1, src.ids.size());
}

}  // namespace

SummaryResult greedy_decode(const TransformerModel& model,
                            const TokenSequence& src,
                            const Vocabulary& tgt_vocab, std::size_t max_len) {
  TransformerGreedySession session(model, source_matrix(src));
  return finish_decode(session, src.tokens, tgt_vocab, max_len);
}

SummaryResult greedy_decode(const Seq2SeqModel& model, const TokenSequence& src,
                            const Vocabulary& tgt_vocab, std::size_t max_len) {
  Seq2SeqGreedySession session(model, source_matrix(src));
  return finish_decode(session, src.tokens, tgt_vocab, max_len);
}

}  // namespace codesumm
