#include "codesumm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace codesumm {

namespace {

constexpr std::size_t kMaxOrder = 4;

// n-grams keyed by the tokens joined with an unambiguous separator
std::unordered_map<std::string, long> ngram_counts(
    const std::vector<std::string>& tokens, std::size_t n) {
  std::unordered_map<std::string, long> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      key += tokens[i + j];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references) {
  if (candidates.empty()) {
    throw std::invalid_argument("corpus_bleu: empty corpus");
  }
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(
        "corpus_bleu: " + std::to_string(candidates.size()) +
        " candidates vs " + std::to_string(references.size()) +
        " references");
  }
  long clipped[kMaxOrder] = {0, 0, 0, 0};
  long total[kMaxOrder] = {0, 0, 0, 0};
  long cand_len = 0, ref_len = 0;
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    cand_len += (long)candidates[p].size();
    ref_len += (long)references[p].size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      const auto cand = ngram_counts(candidates[p], n);
      const auto ref = ngram_counts(references[p], n);
      for (const auto& [gram, count] : cand) {
        const auto it = ref.find(gram);
        clipped[n - 1] += std::min(count, it == ref.end() ? 0L : it->second);
        total[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (clipped[n] == 0) return 0.0;
    log_sum += 0.25 * std::log((double)clipped[n] / (double)total[n]);
  }
  const double bp =
      cand_len < ref_len ? std::exp(1.0 - (double)ref_len / (double)cand_len)
                         : 1.0;
  return bp * std::exp(log_sum);
}

double perplexity(double total_ce_loss, std::size_t token_count) {
  if (token_count == 0) {
    throw std::invalid_argument("perplexity: zero tokens");
  }
  return std::exp(total_ce_loss / (double)token_count);
}

}  // namespace codesumm
