#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "codesumm/corpus.hpp"
#include "codesumm/seq2seq.hpp"
#include "codesumm/transformer.hpp"

namespace codesumm {

/// [layer][head][target_pos][source_pos] attention weights.
using AttentionGrid =
    std::vector<std::vector<std::vector<std::vector<double>>>>;

/// Cross-attention weights captured while greedily decoding one example.
/// The recurrent model exports its single weight vector per step as a
/// 1-layer, 1-head grid.
struct AttentionRecord {
  std::vector<std::string> source_tokens;
  std::vector<std::string> generated_tokens;
  AttentionGrid weights;
};

/// Step interface the greedy loop drives. begin() resets generation
/// state; step() feeds the previous token id and returns logits over the
/// target vocabulary; attention() reports grids for the first n steps.
class GreedyDecodable {
 public:
  virtual ~GreedyDecodable() = default;
  virtual void begin() = 0;
  virtual std::vector<double> step(int prev_id) = 0;
  virtual AttentionGrid attention(std::size_t n_generated) = 0;
};

struct GreedyIds {
  std::vector<int> ids;  // generated tokens, <s>/</s> excluded
  AttentionGrid weights;
};

/// Starts from <s>, takes the argmax at each step (ties broken by the
/// lowest token id), and stops at </s> or after max_len tokens.
GreedyIds greedy_decode_ids(GreedyDecodable& session, std::size_t max_len);

class TransformerGreedySession : public GreedyDecodable {
 public:
  TransformerGreedySession(const TransformerModel& model, IdMatrix src);
  void begin() override;
  std::vector<double> step(int prev_id) override;
  AttentionGrid attention(std::size_t n_generated) override;

 private:
  const TransformerModel& model_;
  IdMatrix src_;
  Tensor memory_;
  std::vector<int> prefix_;
};

class Seq2SeqGreedySession : public GreedyDecodable {
 public:
  Seq2SeqGreedySession(const Seq2SeqModel& model, IdMatrix src);
  void begin() override;
  std::vector<double> step(int prev_id) override;
  AttentionGrid attention(std::size_t n_generated) override;

 private:
  const Seq2SeqModel& model_;
  IdMatrix src_;
  EncoderStates enc_;
  Tensor state_;
  std::vector<std::vector<double>> step_weights_;
};

struct SummaryResult {
  std::vector<std::string> tokens;
  AttentionRecord attention;
};

SummaryResult greedy_decode(const TransformerModel& model,
                            const TokenSequence& src,
                            const Vocabulary& tgt_vocab, std::size_t max_len);
SummaryResult greedy_decode(const Seq2SeqModel& model,
                            const TokenSequence& src,
                            const Vocabulary& tgt_vocab, std::size_t max_len);

}  // namespace codesumm
