// selkd/distill.hpp

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

// Token-level training objectives: word cross-entropy, word-level
// distillation against a frozen teacher, the selectively gated combination of
// the two, and sequence-level distillation of a corpus.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "selkd/data.hpp"
#include "selkd/model.hpp"
#include "selkd/ops.hpp"

namespace selkd {

/// Teacher probabilities per target position, [batch x tgt_len x vocab].
/// Rows on padded positions are zero.
struct TeacherDistribution {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::size_t vocab = 0;
  std::vector<double> probs;
  Mask valid;

  std::span<const double> row(std::size_t b, std::size_t j) const {
    return {probs.data() + (b * len + j) * vocab, vocab};
  }
};

/// Keeps the k most probable entries per row and renormalizes. k == 0 keeps
/// everything.
inline void truncate_top_k(TeacherDistribution& t, std::size_t k) {
  if (k == 0 || k >= t.vocab) return;
  std::vector<std::size_t> order(t.vocab);
  for (std::size_t r = 0; r < t.batch * t.len; ++r) {
    double* row = t.probs.data() + r * t.vocab;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return row[a] > row[b]; });
    double kept = 0.0;
    for (std::size_t i = 0; i < t.vocab; ++i) {
      if (i < k) {
        kept += row[order[i]];
      } else {
        row[order[i]] = 0.0;
      }
    }
    if (kept > 0.0)
      for (std::size_t c = 0; c < t.vocab; ++c) row[c] /= kept;
  }
}

/// Runs the frozen teacher in evaluation mode (no dropout, no graph).
inline TeacherDistribution teacher_distribution(const ModelParams& teacher,
                                                const TokenBatch& batch,
                                                std::size_t top_k = 0) {
  NoGradGuard no_grad;
  const EncoderOutput enc = encode(teacher, batch.src_ids, batch.src_valid);
  const Tensor logits =
      decode_logits(teacher, batch.tgt_in, batch.tgt_valid, enc);
  TeacherDistribution t;
  t.batch = batch.batch_size();
  t.len = batch.tgt_len();
  t.vocab = logits.cols();
  t.probs = softmax_rows(logits.values(), t.vocab);
  t.valid = batch.tgt_valid;
  for (std::size_t i = 0; i < t.batch * t.len; ++i) {
    if (!t.valid[i])
      std::fill_n(t.probs.begin() + static_cast<std::ptrdiff_t>(i * t.vocab),
                  t.vocab, 0.0);
  }
  truncate_top_k(t, top_k);
  return t;
}

/// Per-token cross-entropy [batch x tgt_len]; zero on padding.
struct PerTokenLoss {
  Tensor ce;
  Mask valid;
};

namespace detail {
inline void check_token_shapes(const Tensor& logits, const IdMatrix& ids,
                               const Mask& valid, const char* op) {
  if (logits.rank() != 3 || logits.shape()[0] != ids.rows() ||
      logits.shape()[1] != ids.cols() || valid.rows() != ids.rows() ||
      valid.cols() != ids.cols()) {
    throw DimensionError(std::string(op) + ": logits " +
                         shape_str(logits.shape()) + " vs targets [" +
                         std::to_string(ids.rows()) + "x" +
                         std::to_string(ids.cols()) + "]");
  }
}
}  // namespace detail

/// Same as word_ce but starting from log-probabilities, so one log_softmax
/// can feed both objectives.
inline PerTokenLoss word_ce_from_log_probs(const Tensor& log_probs,
                                           const IdMatrix& tgt_out,
                                           const Mask& valid) {
  detail::check_token_shapes(log_probs, tgt_out, valid, "word_ce");
  Tensor picked = pick(log_probs, tgt_out.data(), valid.data());
  return {scale(picked, -1.0), valid};
}

inline PerTokenLoss word_ce(const Tensor& student_logits,
                            const IdMatrix& tgt_out, const Mask& valid) {
  detail::check_token_shapes(student_logits, tgt_out, valid, "word_ce");
  return word_ce_from_log_probs(log_softmax(student_logits), tgt_out, valid);
}

inline void validate_teacher(const TeacherDistribution& t, const Mask& valid) {
  if (t.valid.rows() != valid.rows() || t.valid.cols() != valid.cols()) {
    throw DimensionError("word_kd: teacher distribution shape mismatch");
  }
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < t.vocab; ++c) {
      const double q = t.probs[i * t.vocab + c];
      if (q < 0.0 || !std::isfinite(q)) {
        throw DataError("word_kd: invalid teacher probability at token " +
                        std::to_string(i));
      }
      s += q;
    }
    if (std::abs(s - 1.0) > 1e-4) {
      throw DataError("word_kd: teacher row " + std::to_string(i) +
                      " sums to " + std::to_string(s));
    }
  }
}

/// kd[b][j] = -Σ_k q_k log p_k on valid positions; gradient reaches the
/// student only.
inline Tensor word_kd_from_log_probs(const Tensor& log_probs,
                                     const TeacherDistribution& teacher,
                                     const Mask& valid) {
  if (log_probs.cols() != teacher.vocab ||
      log_probs.rows() != valid.size()) {
    throw DimensionError("word_kd: logits " + shape_str(log_probs.shape()) +
                         " vs teacher vocab " + std::to_string(teacher.vocab));
  }
  validate_teacher(teacher, valid);
  std::vector<double> w(teacher.probs);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i])
      std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(i * teacher.vocab),
                  teacher.vocab, 0.0);
  }
  return scale(row_dot(log_probs, w), -1.0);
}

inline Tensor word_kd(const Tensor& student_logits,
                      const TeacherDistribution& teacher, const Mask& valid) {
  return word_kd_from_log_probs(log_softmax(student_logits), teacher, valid);
}

/// loss = (Σ_valid ce + α Σ_selected kd) / |valid|. With `kd` undefined only
/// the cross-entropy term is built (selection must then be empty or α = 0).
inline Tensor combined_objective(const PerTokenLoss& ce, const Tensor& kd,
                                 const Mask& selected, double alpha) {
  if (!(alpha >= 0.0)) {
    throw ContractError("combined_objective: alpha must be >= 0");
  }
  const Mask& valid = ce.valid;
  if (selected.rows() != valid.rows() || selected.cols() != valid.cols()) {
    throw DimensionError("combined_objective: selection mask shape mismatch");
  }
  const std::size_t n = count_true(valid);
  if (n == 0) throw ContractError("combined_objective: no valid tokens");
  std::vector<double> ce_w(valid.size(), 0.0);
  std::vector<double> kd_w(valid.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  bool any_selected = false;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (selected[i] && !valid[i]) {
      throw ContractError("combined_objective: padded position " +
                          std::to_string(i) + " is selected");
    }
    if (valid[i]) ce_w[i] = inv;
    if (selected[i]) {
      kd_w[i] = alpha * inv;
      any_selected = true;
    }
  }
  Tensor loss = weighted_sum(ce.ce, ce_w);
  if (!kd.defined()) {
    if (any_selected && alpha != 0.0) {
      throw ContractError(
          "combined_objective: tokens selected but no distillation term");
    }
    return loss;
  }
  return add(loss, weighted_sum(kd, kd_w));
}

/// Replaces every target with the teacher's beam-search output (beam 1 runs
/// batched greedy decoding). Empty beam results fall back to greedy decoding;
/// if that is empty as well the gold target is kept. Fallbacks are reported
/// through `log`.
inline ParallelCorpus seq_kd_distill(
    const ModelParams& teacher, const ParallelCorpus& corpus, std::size_t beam,
    double length_penalty = 1.0,
    const std::function<void(const std::string&)>& log = {}) {
  ParallelCorpus out;
  out.spec = corpus.spec;
  out.pairs.reserve(corpus.pairs.size());
  std::size_t longest = 0;
  std::vector<Hypothesis> greedy;
  if (beam == 1) {
    constexpr std::size_t kChunk = 256;
    for (std::size_t i = 0; i < corpus.pairs.size(); i += kChunk) {
      std::vector<TokenSeq> srcs;
      for (std::size_t k = i; k < std::min(i + kChunk, corpus.pairs.size()); ++k)
        srcs.push_back(corpus.pairs[k].src);
      auto h = greedy_decode_batch(teacher, srcs);
      greedy.insert(greedy.end(), h.begin(), h.end());
    }
  }
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    TokenSeq tgt = beam == 1 ? strip_eos(greedy[i].tokens)
                             : strip_eos(beam_search(teacher, p.src, beam,
                                                     length_penalty).tokens);
    if (tgt.empty()) {
      tgt = strip_eos(greedy_decode(teacher, p.src).tokens);
      if (log) log("seq_kd: empty beam output for pair " + std::to_string(i) +
                   ", using greedy");
    }
    if (tgt.empty()) {
      tgt = p.tgt;
      if (log) log("seq_kd: empty greedy output for pair " +
                   std::to_string(i) + ", keeping reference");
    }
    longest = std::max(longest, tgt.size());
    out.pairs.push_back({p.src, std::move(tgt)});
  }
  out.spec.len_max = std::max(out.spec.len_max, longest);
  return out;
}

}  // namespace selkd
