#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace codesumm {

/// Corpus-level cumulative 4-gram BLEU in [0, 1]: clipped n-gram counts
/// pooled over all pairs, uniform 1/4 weights, brevity penalty
/// exp(1 - r/c) when c < r, no smoothing. Any pooled precision of zero
/// (including an empty 0/0 pool) makes the score 0. One reference per
/// candidate; an empty corpus is a contract error.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references);

/// exp(total_ce_loss / token_count); token_count counts only non-pad
/// target tokens and must be positive.
double perplexity(double total_ce_loss, std::size_t token_count);

}  // namespace codesumm
