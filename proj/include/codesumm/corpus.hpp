#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "codesumm/tensor.hpp"
#include "codesumm/vocab.hpp"

namespace codesumm {

/// One raw (Java method, JavaDoc first line) example.
struct RawPair {
  std::string method_source;
  std::string comment_source;
};

struct TokenizedPair {
  std::vector<std::string> method;
  std::vector<std::string> comment;
};

/// Line-aligned corpus on disk: `functions.tok` and `comments.tok`,
/// one example per line, tokens space-separated.
struct TokenizedCorpus {
  std::vector<TokenizedPair> pairs;

  static TokenizedCorpus load_dir(const std::string& dir);
  void save_dir(const std::string& dir) const;
};

/// Token strings paired with their vocabulary ids.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<int> ids;
};

TokenSequence make_sequence(const std::vector<std::string>& tokens,
                            const Vocabulary& vocab);

struct EncodedPair {
  std::vector<int> src;  // method ids
  std::vector<int> tgt;  // comment ids, unframed
};

std::vector<EncodedPair> encode_corpus(const TokenizedCorpus& corpus,
                                       const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab);

/// Row-major id grid with its pad mask (true exactly where id != <pad>).
struct IdMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;

  static IdMatrix from_ids(std::vector<int> ids, std::size_t rows,
                           std::size_t cols);
  int at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  bool live(std::size_t r, std::size_t c) const {
    return mask[r * cols + c] != 0;
  }
  std::vector<int> column(std::size_t c) const;
};

/// A padded batch. Target rows are framed as <s> ... </s> then pads.
struct Batch {
  IdMatrix src;
  IdMatrix tgt;
  std::size_t size() const { return src.rows; }
};

/// A scalar loss with the number of target tokens it averaged over.
struct LossInfo {
  Tensor loss;
  std::size_t token_count = 0;
};

/// Portable deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Deterministic shuffle, then fixed-size chunks padded to each batch's
/// own max lengths; the final partial batch is emitted.
std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs,
                                std::size_t batch_size, std::uint64_t seed);

Batch make_batch(const std::vector<EncodedPair>& pairs, std::size_t begin,
                 std::size_t end);

struct CorpusSplit {
  TokenizedCorpus train, val, test;
};

/// Disjoint random split under a seed; errors if the requested sizes
/// exceed the corpus.
CorpusSplit split_corpus(const TokenizedCorpus& corpus, std::size_t n_train,
                         std::size_t n_val, std::size_t n_test,
                         std::uint64_t seed);

}  // namespace codesumm
