// selkd/metrics.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Corpus BLEU over token ids, token accuracy and paired bootstrap resampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "selkd/common.hpp"
#include "selkd/tensor.hpp"

namespace selkd {

/// Sufficient statistics for corpus BLEU; they add across sentences.
struct BleuStats {
  std::vector<double> matches;
  std::vector<double> totals;
  double cand_len = 0.0;
  double ref_len = 0.0;

  explicit BleuStats(std::size_t max_n = 4)
      : matches(max_n, 0.0), totals(max_n, 0.0) {}

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < matches.size(); ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuReport {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;
  double brevity_penalty = 0.0;
  double cand_len = 0.0;
  double ref_len = 0.0;
};

inline BleuStats sentence_bleu_stats(const TokenSeq& cand, const TokenSeq& ref,
                                     std::size_t max_n = 4) {
  BleuStats s(max_n);
  s.cand_len = static_cast<double>(cand.size());
  s.ref_len = static_cast<double>(ref.size());
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::map<TokenSeq, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[TokenSeq(ref.begin() + i, ref.begin() + i + n)];
    std::map<TokenSeq, int> cand_counts;
    for (std::size_t i = 0; i + n <= cand.size(); ++i)
      ++cand_counts[TokenSeq(cand.begin() + i, cand.begin() + i + n)];
    double m = 0.0;
    for (const auto& [gram, c] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    s.matches[n - 1] = m;
    s.totals[n - 1] = cand.size() >= n ? static_cast<double>(cand.size() - n + 1) : 0.0;
  }
  return s;
}

/// Add-one smoothing, when enabled, applies to n >= 2 only.
inline BleuReport bleu_from_stats(const BleuStats& s, bool smoothing) {
  BleuReport r;
  const std::size_t max_n = s.matches.size();
  r.cand_len = s.cand_len;
  r.ref_len = s.ref_len;
  r.precisions.resize(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < max_n; ++n) {
    double m = s.matches[n];
    double t = s.totals[n];
    if (smoothing && n >= 1) {
      m += 1.0;
      t += 1.0;
    }
    r.precisions[n] = t > 0.0 ? m / t : 0.0;
    if (r.precisions[n] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  if (s.cand_len <= 0.0) {
    r.brevity_penalty = 0.0;
  } else if (s.cand_len < s.ref_len) {
    r.brevity_penalty = std::exp(1.0 - s.ref_len / s.cand_len);
  } else {
    r.brevity_penalty = 1.0;
  }
  if (zero || r.brevity_penalty == 0.0) {
    r.score = 0.0;
  } else {
    r.score = 100.0 * r.brevity_penalty *
              std::exp(log_sum / static_cast<double>(max_n));
  }
  return r;
}

inline BleuReport bleu(const std::vector<TokenSeq>& candidates,
                       const std::vector<TokenSeq>& references,
                       std::size_t max_n = 4, bool smoothing = true) {
  if (candidates.empty()) throw ContractError("bleu: empty candidate list");
  if (candidates.size() != references.size()) {
    throw ContractError("bleu: " + std::to_string(candidates.size()) +
                        " candidates vs " + std::to_string(references.size()) +
                        " references");
  }
  if (max_n == 0) throw ContractError("bleu: max_n must be positive");
  BleuStats total(max_n);
  for (std::size_t i = 0; i < candidates.size(); ++i)
    total += sentence_bleu_stats(candidates[i], references[i], max_n);
  return bleu_from_stats(total, smoothing);
}

/// Fraction of valid positions whose argmax (first on ties) is the gold id.
inline double token_accuracy(const Tensor& logits, const IdMatrix& gold,
                             const Mask& valid) {
  const std::size_t V = logits.cols();
  if (logits.rows() != gold.size() || valid.size() != gold.size()) {
    throw DimensionError("token_accuracy: logits " + shape_str(logits.shape()) +
                         " vs " + std::to_string(gold.size()) + " targets");
  }
  const auto lv = logits.values();
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!valid[i]) continue;
    ++n;
    const double* row = lv.data() + i * V;
    const auto arg = static_cast<std::int32_t>(std::max_element(row, row + V) - row);
    if (arg == gold[i]) ++hit;
  }
  return n ? static_cast<double>(hit) / static_cast<double>(n) : 0.0;
}

/// Fraction of resamples in which system b scores at least as high as a.
inline double paired_bootstrap(const std::vector<TokenSeq>& cands_a,
                               const std::vector<TokenSeq>& cands_b,
                               const std::vector<TokenSeq>& refs,
                               std::size_t n_resamples, std::uint64_t seed,
                               std::size_t max_n = 4, bool smoothing = true) {
  if (cands_a.size() != refs.size() || cands_b.size() != refs.size()) {
    throw ContractError("paired_bootstrap: list lengths differ");
  }
  if (refs.empty()) throw ContractError("paired_bootstrap: empty corpus");
  if (n_resamples < 100) {
    throw ContractError("paired_bootstrap: need at least 100 resamples");
  }
  std::vector<BleuStats> sa, sb;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    sa.push_back(sentence_bleu_stats(cands_a[i], refs[i], max_n));
    sb.push_back(sentence_bleu_stats(cands_b[i], refs[i], max_n));
  }
  Rng rng(seed);
  std::size_t b_wins = 0;
  for (std::size_t s = 0; s < n_resamples; ++s) {
    BleuStats ta(max_n), tb(max_n);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto j = static_cast<std::size_t>(rng.below(refs.size()));
      ta += sa[j];
      tb += sb[j];
    }
    if (bleu_from_stats(tb, smoothing).score >= bleu_from_stats(ta, smoothing).score)
      ++b_wins;
  }
  return static_cast<double>(b_wins) / static_cast<double>(n_resamples);
}

}  // namespace selkd
