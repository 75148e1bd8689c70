#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written the slow, obvious way and must
// not call into the code paths it verifies.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace oracles {

// C[i][j] = sum_p A[i][p] * B[p][j], triple loop.
inline std::vector<std::vector<double>> matmul(
    const std::vector<std::vector<double>>& a,
    const std::vector<std::vector<double>>& b) {
  const std::size_t m = a.size();
  const std::size_t k = b.size();
  const std::size_t n = b[0].size();
  std::vector<std::vector<double>> c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i][p] * b[p][j];
      c[i][j] = sum;
    }
  }
  return c;
}

// Softmax of one row at extended precision.
inline std::vector<double> softmax_row(const std::vector<double>& x) {
  long double mx = x[0];
  for (double v : x) mx = std::max<long double>(mx, v);
  std::vector<long double> e(x.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = expl((long double)x[i] - mx);
    sum += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (double)(e[i] / sum);
  return out;
}

// Scaled dot-product attention for one [lq, dk] x [lk, dk] x [lk, dv]
// instance, elementwise at long-double precision. mask[q][j] = 0 drops
// source j for query q; an empty mask keeps everything.
inline std::vector<std::vector<double>> scaled_dot_attention(
    const std::vector<std::vector<double>>& q,
    const std::vector<std::vector<double>>& k,
    const std::vector<std::vector<double>>& v,
    const std::vector<std::vector<int>>& mask) {
  const std::size_t lq = q.size();
  const std::size_t lk = k.size();
  const std::size_t dk = q[0].size();
  const std::size_t dv = v[0].size();
  std::vector<std::vector<double>> out(lq, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<long double> score(lk);
    long double mx = -1e300L;
    for (std::size_t j = 0; j < lk; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < dk; ++p) {
        s += (long double)q[i][p] * (long double)k[j][p];
      }
      s /= sqrtl((long double)dk);
      if (!mask.empty() && mask[i][j] == 0) s = -1e300L;
      score[j] = s;
      mx = std::max(mx, s);
    }
    long double denom = 0.0L;
    std::vector<long double> w(lk);
    for (std::size_t j = 0; j < lk; ++j) {
      w[j] = (!mask.empty() && mask[i][j] == 0) ? 0.0L : expl(score[j] - mx);
      denom += w[j];
    }
    for (std::size_t j = 0; j < lk; ++j) {
      const long double weight = w[j] / denom;
      for (std::size_t p = 0; p < dv; ++p) {
        out[i][p] += (double)(weight * (long double)v[j][p]);
      }
    }
  }
  return out;
}

// Corpus BLEU-4 by direct n-gram table enumeration: clipped counts pooled
// over the corpus, geometric mean of the four precisions, brevity penalty
// exp(1 - r/c) when c < r, zero when any pooled precision is zero.
inline double corpus_bleu(
    const std::vector<std::vector<std::string>>& candidates,
    const std::vector<std::vector<std::string>>& references) {
  auto ngram_table = [](const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, long> table;
    if (toks.size() >= n) {
      for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        table[std::vector<std::string>(toks.begin() + i,
                                       toks.begin() + i + n)]++;
      }
    }
    return table;
  };
  long clipped[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  long cand_len = 0, ref_len = 0;
  for (std::size_t p = 0; p < candidates.size(); ++p) {
    cand_len += (long)candidates[p].size();
    ref_len += (long)references[p].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      auto ct = ngram_table(candidates[p], n);
      auto rt = ngram_table(references[p], n);
      for (const auto& [gram, count] : ct) {
        const auto it = rt.find(gram);
        clipped[n - 1] += std::min(count, it == rt.end() ? 0L : it->second);
        total[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (clipped[n] == 0) return 0.0;
    log_sum += 0.25 * std::log((double)clipped[n] / (double)total[n]);
  }
  const double bp =
      cand_len < ref_len ? std::exp(1.0 - (double)ref_len / (double)cand_len)
                         : 1.0;
  return bp * std::exp(log_sum);
}

}  // namespace oracles
