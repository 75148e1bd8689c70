#include "codesumm/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "codesumm/errors.hpp"

namespace codesumm {

namespace {

std::vector<std::vector<std::string>> load_token_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("corpus: cannot open " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.empty()) {
      throw FormatError("corpus: " + path + " line " +
                        std::to_string(line_no) + " is empty");
    }
    lines.push_back(std::move(tokens));
  }
  return lines;
}

void save_token_file(const std::string& path,
                     const std::vector<const std::vector<std::string>*>&
                         lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("corpus: cannot write " + path);
  for (const auto* tokens : lines) {
    for (std::size_t i = 0; i < tokens->size(); ++i) {
      if (i) out << ' ';
      out << (*tokens)[i];
    }
    out << '\n';
  }
}

}  // namespace

TokenizedCorpus TokenizedCorpus::load_dir(const std::string& dir) {
  const auto methods = load_token_file(dir + "/functions.tok");
  const auto comments = load_token_file(dir + "/comments.tok");
  if (methods.size() != comments.size()) {
    throw FormatError("corpus: " + dir + " has " +
                      std::to_string(methods.size()) + " functions but " +
                      std::to_string(comments.size()) + " comments");
  }
  TokenizedCorpus corpus;
  corpus.pairs.reserve(methods.size());
  for (std::size_t i = 0; i < methods.size(); ++i) {
    corpus.pairs.push_back({methods[i], comments[i]});
  }
  return corpus;
}

void TokenizedCorpus::save_dir(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<const std::vector<std::string>*> methods, comments;
  for (const auto& p : pairs) {
    methods.push_back(&p.method);
    comments.push_back(&p.comment);
  }
  save_token_file(dir + "/functions.tok", methods);
  save_token_file(dir + "/comments.tok", comments);
}

TokenSequence make_sequence(const std::vector<std::string>& tokens,
                            const Vocabulary& vocab) {
  return {tokens, vocab.encode(tokens)};
}

std::vector<EncodedPair> encode_corpus(const TokenizedCorpus& corpus,
                                       const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab) {
  std::vector<EncodedPair> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    out.push_back({src_vocab.encode(p.method), tgt_vocab.encode(p.comment)});
  }
  return out;
}

IdMatrix IdMatrix::from_ids(std::vector<int> ids, std::size_t rows,
                            std::size_t cols) {
  if (ids.size() != rows * cols) {
    throw std::invalid_argument("IdMatrix: " + std::to_string(ids.size()) +
                                " ids for " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  IdMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.ids = std::move(ids);
  m.mask.resize(m.ids.size());
  for (std::size_t i = 0; i < m.ids.size(); ++i) {
    m.mask[i] = m.ids[i] != Vocabulary::kPadId;
  }
  return m;
}

std::vector<int> IdMatrix::column(std::size_t c) const {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = ids[r * cols + c];
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = (std::size_t)(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Batch make_batch(const std::vector<EncodedPair>& pairs, std::size_t begin,
                 std::size_t end) {
  if (begin >= end || end > pairs.size()) {
    throw std::invalid_argument("make_batch: bad range");
  }
  const std::size_t rows = end - begin;
  std::size_t src_len = 0, tgt_len = 0;
  for (std::size_t i = begin; i < end; ++i) {
    src_len = std::max(src_len, pairs[i].src.size());
    tgt_len = std::max(tgt_len, pairs[i].tgt.size() + 2);  // <s> ... </s>
  }
  std::vector<int> src(rows * src_len, Vocabulary::kPadId);
  std::vector<int> tgt(rows * tgt_len, Vocabulary::kPadId);
  for (std::size_t r = 0; r < rows; ++r) {
    const EncodedPair& p = pairs[begin + r];
    for (std::size_t c = 0; c < p.src.size(); ++c) {
      src[r * src_len + c] = p.src[c];
    }
    tgt[r * tgt_len] = Vocabulary::kBosId;
    for (std::size_t c = 0; c < p.tgt.size(); ++c) {
      tgt[r * tgt_len + 1 + c] = p.tgt[c];
    }
    tgt[r * tgt_len + 1 + p.tgt.size()] = Vocabulary::kEosId;
  }
  Batch batch;
  batch.src = IdMatrix::from_ids(std::move(src), rows, src_len);
  batch.tgt = IdMatrix::from_ids(std::move(tgt), rows, tgt_len);
  return batch;
}

std::vector<Batch> make_batches(const std::vector<EncodedPair>& pairs,
                                std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) {
    throw std::invalid_argument("make_batches: batch_size must be positive");
  }
  const auto order = shuffled_indices(pairs.size(), seed);
  std::vector<EncodedPair> shuffled;
  shuffled.reserve(pairs.size());
  for (std::size_t i : order) shuffled.push_back(pairs[i]);

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, shuffled.size());
    batches.push_back(make_batch(shuffled, begin, end));
  }
  return batches;
}

CorpusSplit split_corpus(const TokenizedCorpus& corpus, std::size_t n_train,
                         std::size_t n_val, std::size_t n_test,
                         std::uint64_t seed) {
  if (n_train + n_val + n_test > corpus.pairs.size()) {
    throw std::invalid_argument(
        "split: requested " + std::to_string(n_train + n_val + n_test) +
        " examples from a corpus of " + std::to_string(corpus.pairs.size()));
  }
  const auto order = shuffled_indices(corpus.pairs.size(), seed);
  CorpusSplit split;
  std::size_t at = 0;
  for (std::size_t i = 0; i < n_train; ++i) {
    split.train.pairs.push_back(corpus.pairs[order[at++]]);
  }
  for (std::size_t i = 0; i < n_val; ++i) {
    split.val.pairs.push_back(corpus.pairs[order[at++]]);
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    split.test.pairs.push_back(corpus.pairs[order[at++]]);
  }
  return split;
}

}  // namespace codesumm
