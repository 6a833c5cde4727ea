// tests/selection_test.cpp

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

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include <gtest/gtest.h>

#include "selkd/selkd.hpp"
#include "support/gradcheck_cases.hpp"

namespace selkd {
namespace {

RealMatrix row(std::vector<double> v) {
  RealMatrix m(1, v.size());
  m.data() = std::move(v);
  return m;
}

Mask all_valid(std::size_t rows, std::size_t cols) { return Mask(rows, cols, 1); }

RealMatrix random_scores(Rng& rng, std::size_t rows, std::size_t cols) {
  RealMatrix m(rows, cols);
  for (auto& x : m.data()) x = rng.uniform(0.0, 5.0);
  return m;
}

Mask random_valid(Rng& rng, std::size_t rows, std::size_t cols) {
  Mask m(rows, cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t len = 1 + rng.below(cols);
    for (std::size_t j = 0; j < len; ++j) m(r, j) = 1;
  }
  return m;
}

std::vector<std::size_t> positions(const Mask& m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

struct ScoringFixture {
  TransformerConfig cfg = testing::tiny_model_config();
  ParallelCorpus corpus;
  TokenBatch batch;
  Vocab vocab;
  ModelParams student;
  Tensor logits;
  TeacherDistribution teacher;

  ScoringFixture() {
    TaskSpec spec{TaskKind::kLexiconReorder, cfg.tgt_vocab, 2, 6, 1.0, 0.1, 4};
    corpus = generate_corpus(spec, 5, cfg.max_len);
    batch = make_batch(corpus, {0, 1, 2, 3, 4});
    vocab = build_vocab(corpus);
    student = init_params(cfg, 8);
    NoGradGuard g;
    logits = decode_logits(student, batch.tgt_in, batch.tgt_valid,
                           encode(student, batch.src_ids, batch.src_valid));
    teacher = teacher_distribution(init_params(cfg, 9), batch);
  }

  ScoringInputs inputs() const {
    return {&batch, &logits, &teacher, &student["tgt_embed"], &vocab};
  }
};

TEST(CriterionId, NamesRoundTripAndGranularity) {
  EXPECT_EQ(criterion_names().size(), 7u);
  for (const auto& [id, name] : criterion_names()) EXPECT_EQ(criterion_from_string(name), id);
  EXPECT_EQ(granularity(CriterionId::kSentenceLength), Granularity::kSentence);
  EXPECT_EQ(granularity(CriterionId::kSentenceCe), Granularity::kSentence);
  for (auto c : {CriterionId::kWordFrequency, CriterionId::kEmbeddingNorm, CriterionId::kWordCe,
                 CriterionId::kTeacherPGolden, CriterionId::kTeacherEntropy})
    EXPECT_EQ(granularity(c), Granularity::kWord);
  EXPECT_THROW(criterion_from_string("bleu"), ConfigError);
}

TEST(ScoreTokens, SentenceLengthBroadcasts) {
  ParallelCorpus c;
  c.spec.vocab_size = 10;
  c.pairs.push_back({{3, 4, 5, 6, 7}, {3, 4, 5, 6, 7}});
  c.pairs.push_back({{3, 4}, {3, 4}});
  const TokenBatch b = make_batch(c, {0, 1});
  ScoringInputs in;
  in.batch = &b;
  const auto s = score_tokens(CriterionId::kSentenceLength, in);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(s(0, j), 5.0);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(s(1, j), j < 3 ? 2.0 : 0.0);
}

TEST(ScoreTokens, UniformTeacherRow) {
  ParallelCorpus c;
  c.spec.vocab_size = 4;
  c.pairs.push_back({{3}, {3}});
  const TokenBatch b = make_batch(c, {0});
  TeacherDistribution t;
  t.batch = 1;
  t.len = b.tgt_len();
  t.vocab = 4;
  t.valid = b.tgt_valid;
  t.probs.assign(t.len * 4, 0.25);
  ScoringInputs in;
  in.batch = &b;
  in.teacher = &t;
  EXPECT_NEAR(score_tokens(CriterionId::kTeacherEntropy, in)(0, 0), std::log(4.0), 1e-12);
  EXPECT_EQ(score_tokens(CriterionId::kTeacherPGolden, in)(0, 0), 0.25);
}

TEST(ScoreTokens, SentenceCeIsMeanOfWordCe) {
  const ScoringFixture f;
  const auto w = score_tokens(CriterionId::kWordCe, f.inputs());
  const auto s = score_tokens(CriterionId::kSentenceCe, f.inputs());
  for (std::size_t r = 0; r < f.batch.batch_size(); ++r) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < f.batch.tgt_len(); ++j)
      if (f.batch.tgt_valid(r, j)) {
        sum += w(r, j);
        ++n;
      }
    for (std::size_t j = 0; j < f.batch.tgt_len(); ++j)
      if (f.batch.tgt_valid(r, j)) {
        EXPECT_NEAR(s(r, j), sum / static_cast<double>(n), 1e-12);
      }
  }
}

TEST(ScoreTokens, WordLevelScoresMatchDefinitions) {
  const ScoringFixture f;
  const auto in = f.inputs();
  const auto ce = score_tokens(CriterionId::kWordCe, in);
  const auto freq = score_tokens(CriterionId::kWordFrequency, in);
  const auto norm = score_tokens(CriterionId::kEmbeddingNorm, in);
  const auto pg = score_tokens(CriterionId::kTeacherPGolden, in);
  const auto ent = score_tokens(CriterionId::kTeacherEntropy, in);
  const Tensor& E = f.student["tgt_embed"];
  const std::size_t V = f.cfg.tgt_vocab;
  for (std::size_t i = 0; i < f.batch.tgt_valid.size(); ++i) {
    if (!f.batch.tgt_valid[i]) {
      for (const auto* m : {&ce, &freq, &norm, &pg, &ent}) EXPECT_EQ((*m)[i], 0.0);
      continue;
    }
    const auto gold = static_cast<std::size_t>(f.batch.tgt_out[i]);
    const auto p = softmax_rows(std::span<const double>(f.logits.values()).subspan(i * V, V), V);
    EXPECT_NEAR(ce[i], -std::log(p[gold]), 1e-10);
    EXPECT_EQ(freq[i], static_cast<double>(f.vocab.frequency(f.batch.tgt_out[i])));
    double n2 = 0.0;
    for (std::size_t c = 0; c < E.cols(); ++c) n2 += std::pow(E.values()[gold * E.cols() + c], 2);
    EXPECT_NEAR(norm[i], std::sqrt(n2), 1e-12);
    const auto q = f.teacher.row(i / f.batch.tgt_len(), i % f.batch.tgt_len());
    EXPECT_EQ(pg[i], q[gold]);
    double h = 0.0;
    for (double x : q) h -= x > 0 ? x * std::log(x) : 0.0;
    EXPECT_NEAR(ent[i], h, 1e-12);
  }
}

TEST(ScoreTokens, MissingInputsAreContractErrors) {
  const ScoringFixture f;
  ScoringInputs in;
  in.batch = &f.batch;
  for (auto c : {CriterionId::kWordFrequency, CriterionId::kEmbeddingNorm, CriterionId::kWordCe,
                 CriterionId::kSentenceCe, CriterionId::kTeacherPGolden,
                 CriterionId::kTeacherEntropy})
    EXPECT_THROW(score_tokens(c, in), ContractError) << to_string(c);
  EXPECT_THROW(score_tokens(CriterionId::kSentenceLength, ScoringInputs{}), ContractError);
}

TEST(MedianPartition, FourScores) {
  const auto p = median_partition(row({0.5, 1.5, 2.5, 3.5}), all_valid(1, 4), Granularity::kWord);
  EXPECT_EQ(positions(p.high), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(positions(p.low), (std::vector<std::size_t>{0, 1}));
}

TEST(MedianPartition, TiesGoToEarlierPositions) {
  auto p = median_partition(row({1, 1, 1, 1}), all_valid(1, 4), Granularity::kWord);
  EXPECT_EQ(positions(p.high), (std::vector<std::size_t>{0, 1}));
  p = median_partition(row({2, 2, 2}), all_valid(1, 3), Granularity::kWord);
  EXPECT_EQ(positions(p.high), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(positions(p.low), (std::vector<std::size_t>{2}));
}

TEST(MedianPartition, SevenScoresMatchSortOracle) {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const RealMatrix s = random_scores(rng, 1, 7);
    const auto p = median_partition(s, all_valid(1, 7), Granularity::kWord);
    std::vector<std::size_t> idx(7);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    std::vector<std::size_t> top(idx.begin(), idx.begin() + 4);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(positions(p.high), top);
  }
}

TEST(MedianPartition, SentenceGranularityKeepsSentencesWhole) {
  RealMatrix s(3, 3, 0.0);
  Mask v(3, 3, 0);
  const std::vector<double> per{1.0, 9.0, 5.0};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j <= r; ++j) {
      v(r, j) = 1;
      s(r, j) = per[r];
    }
  const auto p = median_partition(s, v, Granularity::kSentence);
  EXPECT_EQ(positions(p.high), (std::vector<std::size_t>{3, 4, 6, 7, 8}));
  EXPECT_EQ(positions(p.low), (std::vector<std::size_t>{0}));
}

TEST(MedianPartition, FewerThanTwoUnitsIsContractError) {
  EXPECT_THROW(median_partition(row({1.0}), all_valid(1, 1), Granularity::kWord), ContractError);
  EXPECT_THROW(median_partition(row({1.0, 2.0}), all_valid(1, 2), Granularity::kSentence),
               ContractError);
}

TEST(MedianPartition, HalvesAreComplementary) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 2 + rng.below(5), cols = 1 + rng.below(8);
    const RealMatrix s = random_scores(rng, rows, cols);
    const Mask v = random_valid(rng, rows, cols);
    for (auto g : {Granularity::kWord, Granularity::kSentence}) {
      if (g == Granularity::kWord && count_true(v) < 2) continue;
      const auto p = median_partition(s, v, g);
      for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_FALSE(p.high[i] && p.low[i]);
        EXPECT_EQ(p.high[i] || p.low[i], static_cast<bool>(v[i]));
      }
      if (g == Granularity::kWord) {
        const auto d = static_cast<long>(count_true(p.high)) - static_cast<long>(count_true(p.low));
        EXPECT_TRUE(d == 0 || d == 1) << d;
      }
    }
  }
}

TEST(BatchLevelSelect, TopHalf) {
  const auto sel = batch_level_select(row({0.1, 0.9, 0.5, 0.7}), all_valid(1, 4), 0.5);
  EXPECT_EQ(positions(sel.mask), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(sel.selected_count, 2u);
  EXPECT_EQ(sel.threshold_used, 0.7);
}

TEST(BatchLevelSelect, RateEndpoints) {
  Mask v = all_valid(1, 4);
  v[3] = 0;
  const auto s = row({0.1, 0.9, 0.5, 0.7});
  const auto all = batch_level_select(s, v, 1.0);
  EXPECT_EQ(all.mask, v);
  const auto none = batch_level_select(s, v, 0.0);
  EXPECT_EQ(none.selected_count, 0u);
  EXPECT_TRUE(std::isinf(none.threshold_used));
  EXPECT_THROW(batch_level_select(s, v, 1.5), ContractError);
  EXPECT_THROW(batch_level_select(s, v, -0.1), ContractError);
  EXPECT_THROW(batch_level_select(s, v, std::nan("")), ContractError);
}

TEST(BatchLevelSelect, CountIsCeilingOfRate) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const RealMatrix s = random_scores(rng, 3, 6);
    const Mask v = random_valid(rng, 3, 6);
    const double r = rng.uniform();
    const auto sel = batch_level_select(s, v, r);
    const auto m = count_true(v);
    EXPECT_EQ(sel.selected_count,
              static_cast<std::size_t>(std::ceil(r * static_cast<double>(m) - 1e-9)));
    EXPECT_EQ(count_true(sel.mask), sel.selected_count);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (sel.mask[i]) {
        EXPECT_TRUE(v[i]);
      }
    }
  }
}

TEST(BatchLevelSelect, MonotoneInRate) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const RealMatrix s = random_scores(rng, 4, 5);
    const Mask v = random_valid(rng, 4, 5);
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 > r2) std::swap(r1, r2);
    const auto a = batch_level_select(s, v, r1);
    const auto b = batch_level_select(s, v, r2);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (a.mask[i]) {
        EXPECT_TRUE(b.mask[i]);
      }
    }
  }
}

TEST(Selection, InvariantUnderPositiveScaling) {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const RealMatrix s = random_scores(rng, 3, 6);
    const Mask v = random_valid(rng, 3, 6);
    if (count_true(v) < 2) continue;
    RealMatrix scaled = s;
    const double c = rng.uniform(0.01, 100.0);
    for (auto& x : scaled.data()) x *= c;
    const double r = rng.uniform();
    EXPECT_EQ(batch_level_select(s, v, r).mask, batch_level_select(scaled, v, r).mask);
    EXPECT_EQ(median_partition(s, v, Granularity::kWord).high,
              median_partition(scaled, v, Granularity::kWord).high);
    CEQueue q1(7), q2(7);
    for (int step = 0; step < 3; ++step) {
      EXPECT_EQ(global_level_select(s, v, q1, r).mask, global_level_select(scaled, v, q2, r).mask);
    }
  }
}

TEST(CEQueue, EvictsOldestAtCapacity) {
  CEQueue q(4);
  for (double x : {1, 2, 3, 4, 5}) q.push(x);
  EXPECT_EQ(q.contents(), (std::vector<double>{2, 3, 4, 5}));
  EXPECT_EQ(q.size(), 4u);
}

TEST(CEQueue, GrowsBelowCapacity) {
  CEQueue q(4);
  queue_push_batch(q, row({7, 8}), all_valid(1, 2));
  EXPECT_EQ(q.size(), 2u);
  EXPECT_FALSE(q.full());
  EXPECT_EQ(q.contents(), (std::vector<double>{7, 8}));
}

TEST(CEQueue, TwoFullBatchesLeaveSecond) {
  CEQueue q(3);
  queue_push_batch(q, row({1, 2, 3}), all_valid(1, 3));
  queue_push_batch(q, row({4, 5, 6}), all_valid(1, 3));
  EXPECT_EQ(q.contents(), (std::vector<double>{4, 5, 6}));
}

TEST(CEQueue, PushSkipsPadding) {
  CEQueue q(5);
  Mask v = all_valid(1, 3);
  v[1] = 0;
  queue_push_batch(q, row({1, 99, 3}), v);
  EXPECT_EQ(q.contents(), (std::vector<double>{1, 3}));
}

TEST(CEQueue, IsExactFifo) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cap = 1 + rng.below(20);
    CEQueue q(cap);
    std::vector<double> pushed;
    const std::size_t n = rng.below(80);
    for (std::size_t i = 0; i < n; ++i) {
      pushed.push_back(rng.normal());
      q.push(pushed.back());
    }
    const std::size_t keep = std::min(n, cap);
    EXPECT_EQ(q.contents(), std::vector<double>(pushed.end() - static_cast<long>(keep), pushed.end()));
  }
}

TEST(CEQueue, StateRoundTrip) {
  CEQueue q(5);
  for (double x : {1, 2, 3, 4, 5, 6, 7}) q.push(x);
  const CEQueue back = CEQueue::from_state(q.state());
  EXPECT_EQ(back.contents(), q.contents());
  auto bad = q.state();
  bad.head = 9;
  EXPECT_THROW(CEQueue::from_state(bad), DataError);
  EXPECT_THROW(CEQueue(0), ContractError);
}

TEST(GlobalLevelSelect, ThresholdFromQueue) {
  CEQueue q(4);
  const auto sel = global_level_select(row({2, 3, 4, 5}), all_valid(1, 4), q, 0.5);
  EXPECT_EQ(sel.threshold_used, 4.0);
  EXPECT_EQ(positions(sel.mask), (std::vector<std::size_t>{2, 3}));
  EXPECT_THROW(global_level_select(row({1}), all_valid(1, 1), q, 2.0), ContractError);
}

TEST(GlobalLevelSelect, CapacityEqualToBatchMatchesBls) {
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const RealMatrix s = random_scores(rng, 3, 5);
    const Mask v = random_valid(rng, 3, 5);
    const double r = rng.uniform();
    CEQueue q(count_true(v));
    EXPECT_EQ(global_level_select(s, v, q, r).mask, batch_level_select(s, v, r).mask);
  }
}

// Reference: an explicit window of the most recent values, fully sorted at
// every step.
TEST(GlobalLevelSelect, MatchesSortedWindowOracle) {
  Rng rng(17);
  const std::size_t cap = 100;
  const double r = 0.3;
  CEQueue q(cap);
  std::deque<double> window;
  for (int step = 0; step < 50; ++step) {
    const RealMatrix s = random_scores(rng, 2, 5);  // 10 values per step
    const Mask v = all_valid(2, 5);
    const auto sel = global_level_select(s, v, q, r);
    for (double x : s.data()) {
      window.push_back(x);
      if (window.size() > cap) window.pop_front();
    }
    std::vector<double> sorted(window.begin(), window.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(sorted.size())));
    const double t = sorted[k - 1];
    EXPECT_EQ(sel.threshold_used, t) << "step " << step;
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(sel.mask[i], s[i] >= t ? 1 : 0);
  }
}

TEST(StaticPartition, CorpusWideLengthSplit) {
  ParallelCorpus c;
  c.spec.vocab_size = 10;
  for (std::size_t len : {1u, 4u, 2u, 3u}) c.pairs.push_back({TokenSeq(len, 3), TokenSeq(len, 3)});
  const Vocab v = build_vocab(c);
  const auto high = static_partition({CriterionId::kSentenceLength, PartitionHalf::kHigh}, c, v);
  const auto low = static_partition({CriterionId::kSentenceLength, PartitionHalf::kLow}, c, v);
  ASSERT_EQ(high.size(), 4u);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(high[r].size(), c.pairs[r].tgt.size() + 1);
    const bool long_sentence = c.pairs[r].tgt.size() >= 3;
    for (std::size_t j = 0; j < high[r].size(); ++j) {
      EXPECT_EQ(high[r][j], long_sentence ? 1 : 0);
      EXPECT_EQ(low[r][j], long_sentence ? 0 : 1);
    }
  }
  EXPECT_THROW(static_partition({CriterionId::kWordCe, PartitionHalf::kHigh}, c, v), ContractError);
}

TEST(StaticPartition, FrequencyHighHoldsFrequentTokens) {
  const auto c = generate_corpus(TaskSpec{TaskKind::kCopy, 20, 3, 8, 1.2, 0.0, 5}, 200);
  const Vocab v = build_vocab(c);
  const auto high = static_partition({CriterionId::kWordFrequency, PartitionHalf::kHigh}, c, v);
  double min_high = 1e300, max_low = -1.0;
  for (std::size_t r = 0; r < c.pairs.size(); ++r)
    for (std::size_t j = 0; j < high[r].size(); ++j) {
      const auto id = j < c.pairs[r].tgt.size() ? c.pairs[r].tgt[j] : kEos;
      const double f = static_cast<double>(v.frequency(id));
      if (high[r][j]) {
        min_high = std::min(min_high, f);
      } else {
        max_low = std::max(max_low, f);
      }
    }
  EXPECT_GE(min_high, max_low);
}

}  // namespace
}  // namespace selkd
