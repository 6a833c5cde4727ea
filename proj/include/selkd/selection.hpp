// selkd/selection.hpp

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

// Choosing which target tokens receive the distillation loss.
//
// Criterion scores cover data properties (sentence length, word frequency),
// the student (embedding norm, word and sentence cross-entropy) and the
// teacher (gold-label probability, prediction entropy). The selection rules
// are the median split into complementary halves, the batch-level top-r%
// rule, and the global rule that ranks the batch against a FIFO queue of
// recently seen word cross-entropies.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "selkd/data.hpp"
#include "selkd/distill.hpp"

namespace selkd {

enum class CriterionId {
  kSentenceLength,
  kWordFrequency,
  kEmbeddingNorm,
  kWordCe,
  kSentenceCe,
  kTeacherPGolden,
  kTeacherEntropy,
};

enum class Granularity { kSentence, kWord };

inline Granularity granularity(CriterionId c) {
  return (c == CriterionId::kSentenceLength || c == CriterionId::kSentenceCe)
             ? Granularity::kSentence
             : Granularity::kWord;
}

/// Criteria whose scores do not change during training; their median is
/// taken once over the corpus.
inline bool is_static(CriterionId c) {
  return c == CriterionId::kSentenceLength || c == CriterionId::kWordFrequency;
}

inline const std::vector<std::pair<CriterionId, std::string>>& criterion_names() {
  static const std::vector<std::pair<CriterionId, std::string>> names = {
      {CriterionId::kSentenceLength, "sentence_length"},
      {CriterionId::kWordFrequency, "word_frequency"},
      {CriterionId::kEmbeddingNorm, "embedding_norm"},
      {CriterionId::kWordCe, "word_ce"},
      {CriterionId::kSentenceCe, "sentence_ce"},
      {CriterionId::kTeacherPGolden, "teacher_p_golden"},
      {CriterionId::kTeacherEntropy, "teacher_entropy"},
  };
  return names;
}

inline std::string to_string(CriterionId c) {
  for (const auto& [id, name] : criterion_names())
    if (id == c) return name;
  return "?";
}

inline CriterionId criterion_from_string(const std::string& s) {
  for (const auto& [id, name] : criterion_names())
    if (name == s) return id;
  throw ConfigError("partition.criterion: unknown criterion '" + s + "'");
}

enum class PartitionHalf { kHigh, kLow };

inline std::string to_string(PartitionHalf h) {
  return h == PartitionHalf::kHigh ? "high" : "low";
}

inline PartitionHalf half_from_string(const std::string& s) {
  if (s == "high" || s == "High") return PartitionHalf::kHigh;
  if (s == "low" || s == "Low") return PartitionHalf::kLow;
  throw ConfigError("partition.half: expected high or low, got '" + s + "'");
}

struct PartitionSpec {
  CriterionId criterion = CriterionId::kWordCe;
  PartitionHalf half = PartitionHalf::kHigh;
};

/// Inputs for score_tokens; only those the criterion needs must be set.
struct ScoringInputs {
  const TokenBatch* batch = nullptr;
  const Tensor* student_logits = nullptr;  // [batch x tgt_len x vocab]
  const TeacherDistribution* teacher = nullptr;
  const Tensor* embeddings = nullptr;  // student target embedding table
  const Vocab* vocab = nullptr;
};

/// Plain per-token cross-entropy from logit values (no graph).
inline RealMatrix token_ce_values(const Tensor& logits, const IdMatrix& gold,
                                  const Mask& valid) {
  const std::size_t V = logits.cols();
  const auto lv = logits.values();
  RealMatrix ce(gold.rows(), gold.cols(), 0.0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!valid[i]) continue;
    const double* row = lv.data() + i * V;
    double mx = row[0];
    for (std::size_t c = 1; c < V; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < V; ++c) s += std::exp(row[c] - mx);
    const auto y = static_cast<std::size_t>(gold[i]);
    if (y >= V) throw IndexError("token_ce: target id outside vocabulary");
    ce[i] = -(row[y] - mx - std::log(s));
  }
  return ce;
}

inline double entropy(std::span<const double> q) {
  double h = 0.0;
  for (double p : q)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

/// Scores for every target position; padding scores 0. Sentence-level
/// criteria broadcast one value to all tokens of the sentence.
inline RealMatrix score_tokens(CriterionId criterion, const ScoringInputs& in) {
  if (!in.batch) throw ContractError("score_tokens: batch is required");
  const TokenBatch& b = *in.batch;
  const Mask& valid = b.tgt_valid;
  const std::size_t B = b.batch_size();
  const std::size_t T = b.tgt_len();
  RealMatrix out(B, T, 0.0);
  auto require = [&](const void* p, const char* what) {
    if (!p) {
      throw ContractError("score_tokens: criterion " + to_string(criterion) +
                          " requires " + what);
    }
  };
  switch (criterion) {
    case CriterionId::kSentenceLength:
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < T; ++j)
          if (valid(r, j))
            out(r, j) = static_cast<double>(b.sentence_lengths[r]);
      break;
    case CriterionId::kWordFrequency:
      require(in.vocab, "a vocabulary");
      for (std::size_t i = 0; i < out.size(); ++i)
        if (valid[i])
          out[i] = static_cast<double>(in.vocab->frequency(b.tgt_out[i]));
      break;
    case CriterionId::kEmbeddingNorm: {
      require(in.embeddings, "student embeddings");
      const auto& E = *in.embeddings;
      const std::size_t d = E.cols();
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!valid[i]) continue;
        const auto id = static_cast<std::size_t>(b.tgt_out[i]);
        if (id >= E.rows()) throw IndexError("score_tokens: id outside embedding table");
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double v = E.values()[id * d + c];
          s += v * v;
        }
        out[i] = std::sqrt(s);
      }
      break;
    }
    case CriterionId::kWordCe:
      require(in.student_logits, "student logits");
      out = token_ce_values(*in.student_logits, b.tgt_out, valid);
      break;
    case CriterionId::kSentenceCe: {
      require(in.student_logits, "student logits");
      const auto ce = token_ce_values(*in.student_logits, b.tgt_out, valid);
      for (std::size_t r = 0; r < B; ++r) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < T; ++j)
          if (valid(r, j)) {
            s += ce(r, j);
            ++n;
          }
        const double mean = n ? s / static_cast<double>(n) : 0.0;
        for (std::size_t j = 0; j < T; ++j)
          if (valid(r, j)) out(r, j) = mean;
      }
      break;
    }
    case CriterionId::kTeacherPGolden:
      require(in.teacher, "a teacher distribution");
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < T; ++j)
          if (valid(r, j))
            out(r, j) =
                in.teacher->row(r, j)[static_cast<std::size_t>(b.tgt_out(r, j))];
      break;
    case CriterionId::kTeacherEntropy:
      require(in.teacher, "a teacher distribution");
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < T; ++j)
          if (valid(r, j)) out(r, j) = entropy(in.teacher->row(r, j));
      break;
  }
  return out;
}

namespace detail {
// Indices sorted by descending score, ties by ascending index.
inline std::vector<std::size_t> rank_desc(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return scores[a] > scores[b];
  });
  return order;
}

inline std::size_t top_count(double r, std::size_t m) {
  if (r <= 0.0 || m == 0) return 0;
  // ceil(r*m) with a guard against products like 0.7*10 = 7.000000000000001.
  const double x = r * static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9));
  return std::min(k, m);
}

inline void check_rate(double r, const char* op) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw ContractError(std::string(op) + ": r must be in [0, 1], got " +
                        std::to_string(r));
  }
}
}  // namespace detail

struct PartitionMasks {
  Mask high;
  Mask low;
};

/// Splits valid units into complementary halves at the median: the top
/// ceil(n/2) units by score (ties to the earlier unit) form High.
inline PartitionMasks median_partition(const RealMatrix& scores,
                                       const Mask& valid, Granularity g) {
  if (scores.rows() != valid.rows() || scores.cols() != valid.cols()) {
    throw DimensionError("median_partition: score/mask shape mismatch");
  }
  PartitionMasks out{Mask(valid.rows(), valid.cols(), 0),
                     Mask(valid.rows(), valid.cols(), 0)};
  // Each unit is a list of flat positions.
  std::vector<std::vector<std::size_t>> units;
  std::vector<double> unit_score;
  if (g == Granularity::kWord) {
    for (std::size_t i = 0; i < valid.size(); ++i)
      if (valid[i]) {
        units.push_back({i});
        unit_score.push_back(scores[i]);
      }
  } else {
    for (std::size_t r = 0; r < valid.rows(); ++r) {
      std::vector<std::size_t> pos;
      for (std::size_t j = 0; j < valid.cols(); ++j)
        if (valid(r, j)) pos.push_back(r * valid.cols() + j);
      if (pos.empty()) continue;
      unit_score.push_back(scores[pos.front()]);
      units.push_back(std::move(pos));
    }
  }
  if (units.size() < 2) {
    throw ContractError("median_partition: need at least 2 valid units, got " +
                        std::to_string(units.size()));
  }
  const auto order = detail::rank_desc(unit_score);
  const std::size_t n_high = (units.size() + 1) / 2;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    Mask& m = rank < n_high ? out.high : out.low;
    for (auto p : units[order[rank]]) m[p] = 1;
  }
  return out;
}

struct SelectionMask {
  Mask mask;
  double threshold_used = std::numeric_limits<double>::infinity();
  std::size_t selected_count = 0;
};

/// Selects exactly k = ceil(r * M) valid tokens with the largest scores,
/// ties going to the earlier flat position.
inline SelectionMask batch_level_select(const RealMatrix& scores,
                                        const Mask& valid, double r) {
  detail::check_rate(r, "batch_level_select");
  std::vector<std::size_t> pos;
  std::vector<double> vals;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) {
      pos.push_back(i);
      vals.push_back(scores[i]);
    }
  SelectionMask sel{Mask(valid.rows(), valid.cols(), 0),
                    std::numeric_limits<double>::infinity(), 0};
  const std::size_t k = detail::top_count(r, pos.size());
  const auto order = detail::rank_desc(vals);
  for (std::size_t i = 0; i < k; ++i) sel.mask[pos[order[i]]] = 1;
  sel.selected_count = k;
  if (k > 0) sel.threshold_used = vals[order[k - 1]];
  return sel;
}

/// Fixed-capacity FIFO of detached word cross-entropies. Pushing at capacity
/// evicts the oldest value.
class CEQueue {
 public:
  struct State {
    std::size_t capacity = 0;
    std::size_t head = 0;
    std::size_t count = 0;
    std::vector<double> ring;
  };

  explicit CEQueue(std::size_t capacity) : ring_(capacity, 0.0) {
    if (capacity == 0) throw ContractError("CEQueue: capacity must be positive");
  }

  std::size_t capacity() const { return ring_.size(); }
  std::size_t size() const { return count_; }
  bool full() const { return count_ == ring_.size(); }

  void push(double v) {
    if (count_ < ring_.size()) {
      ring_[(head_ + count_) % ring_.size()] = v;
      ++count_;
    } else {
      ring_[head_] = v;
      head_ = (head_ + 1) % ring_.size();
    }
  }

  /// Oldest to newest.
  std::vector<double> contents() const {
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i)
      out[i] = ring_[(head_ + i) % ring_.size()];
    return out;
  }

  /// The ceil(r * size)-th largest stored value; +inf when that rank is 0.
  double threshold(double r) const {
    const std::size_t k = detail::top_count(r, count_);
    if (k == 0) return std::numeric_limits<double>::infinity();
    std::vector<double> v = contents();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     v.end(), std::greater<>());
    return v[k - 1];
  }

  State state() const { return {ring_.size(), head_, count_, ring_}; }

  static CEQueue from_state(const State& s) {
    if (s.capacity == 0 || s.ring.size() != s.capacity || s.count > s.capacity ||
        s.head >= s.capacity) {
      throw DataError("CEQueue: inconsistent saved state");
    }
    CEQueue q(s.capacity);
    q.ring_ = s.ring;
    q.head_ = s.head;
    q.count_ = s.count;
    return q;
  }

 private:
  std::vector<double> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

/// Pushes valid scores in flat batch order.
inline void queue_push_batch(CEQueue& queue, const RealMatrix& scores,
                             const Mask& valid) {
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) queue.push(scores[i]);
}

/// Pushes the batch into the queue, then selects tokens whose score reaches
/// the queue's top-r% threshold.
inline SelectionMask global_level_select(const RealMatrix& scores,
                                         const Mask& valid, CEQueue& queue,
                                         double r) {
  detail::check_rate(r, "global_level_select");
  queue_push_batch(queue, scores, valid);
  const double t = queue.threshold(r);
  SelectionMask sel{Mask(valid.rows(), valid.cols(), 0), t, 0};
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i] && scores[i] >= t) {
      sel.mask[i] = 1;
      ++sel.selected_count;
    }
  }
  return sel;
}

/// Corpus-wide median split for static criteria. Returns, per pair, a mask
/// over target positions (tokens plus EOS) marking the requested half.
inline std::vector<std::vector<std::uint8_t>> static_partition(
    const PartitionSpec& spec, const ParallelCorpus& corpus,
    const Vocab& vocab) {
  if (!is_static(spec.criterion)) {
    throw ContractError("static_partition: criterion " +
                        to_string(spec.criterion) + " depends on the model");
  }
  std::size_t T = 0;
  for (const auto& p : corpus.pairs) T = std::max(T, p.tgt.size() + 1);
  const std::size_t N = corpus.pairs.size();
  RealMatrix scores(N, T, 0.0);
  Mask valid(N, T, 0);
  for (std::size_t r = 0; r < N; ++r) {
    const auto& tgt = corpus.pairs[r].tgt;
    for (std::size_t j = 0; j <= tgt.size(); ++j) {
      valid(r, j) = 1;
      if (spec.criterion == CriterionId::kSentenceLength) {
        scores(r, j) = static_cast<double>(tgt.size());
      } else {
        const std::int32_t id = j < tgt.size() ? tgt[j] : kEos;
        scores(r, j) = static_cast<double>(vocab.frequency(id));
      }
    }
  }
  const auto halves = median_partition(scores, valid, granularity(spec.criterion));
  const Mask& m = spec.half == PartitionHalf::kHigh ? halves.high : halves.low;
  std::vector<std::vector<std::uint8_t>> out(N);
  for (std::size_t r = 0; r < N; ++r) {
    out[r].resize(corpus.pairs[r].tgt.size() + 1);
    for (std::size_t j = 0; j < out[r].size(); ++j) out[r][j] = m(r, j);
  }
  return out;
}

}  // namespace selkd
