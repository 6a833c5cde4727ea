// tests/data_test.cpp

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
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "selkd/selkd.hpp"

namespace selkd {
namespace {

TaskSpec spec_of(TaskKind kind, double noise = 0.0, double zipf = 1.0) {
  TaskSpec s;
  s.kind = kind;
  s.noise_rate = noise;
  s.zipf_s = zipf;
  s.seed = 7;
  return s;
}

TEST(GenerateCorpus, CopyWithoutNoiseIsIdentity) {
  const auto c = generate_corpus(spec_of(TaskKind::kCopy), 200);
  for (const auto& p : c.pairs) EXPECT_EQ(p.src, p.tgt);
}

TEST(GenerateCorpus, ReverseReversesSource) {
  const TaskSpec s = spec_of(TaskKind::kReverse);
  EXPECT_EQ(task_target(s, task_lexicon(s), {5, 6, 7}), (TokenSeq{7, 6, 5}));
  for (const auto& p : generate_corpus(s, 100).pairs)
    EXPECT_EQ(p.tgt, TokenSeq(p.src.rbegin(), p.src.rend()));
}

TEST(GenerateCorpus, ZipfRankFrequencyIsSkewed) {
  TaskSpec s = spec_of(TaskKind::kCopy, 0.0, 1.2);
  s.len_min = s.len_max = 10;
  const auto c = generate_corpus(s, 5000);  // 50K source tokens
  std::map<std::int32_t, std::size_t> counts;
  for (const auto& p : c.pairs)
    for (auto t : p.src) ++counts[t];
  std::vector<std::size_t> by_rank;
  for (std::int32_t id = kFirstRegularId; id < static_cast<std::int32_t>(s.vocab_size); ++id)
    by_rank.push_back(counts[id]);
  for (std::size_t k = 1; k < by_rank.size(); ++k)
    EXPECT_GE(by_rank[k - 1] + 60, by_rank[k]) << "rank " << k;  // sampling slack
  std::vector<std::size_t> sorted = by_rank;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  EXPECT_EQ(sorted.front(), by_rank.front());
  const double median = static_cast<double>(sorted[sorted.size() / 2]);
  EXPECT_GE(static_cast<double>(by_rank.front()), 5.0 * median);
}

TEST(GenerateCorpus, ZipfRatiosFollowPowerLaw) {
  const double s = 1.0;
  ZipfSampler z(37, s);
  Rng rng(99);
  std::vector<std::size_t> counts(37, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(z(rng) - kFirstRegularId)];
  for (std::size_t k = 2; k <= 10; ++k) {
    const double ratio = static_cast<double>(counts[0]) / static_cast<double>(counts[k - 1]);
    const double expect = std::pow(static_cast<double>(k), s);
    EXPECT_GT(ratio, expect / 2.0) << k;
    EXPECT_LT(ratio, expect * 2.0) << k;
  }
}

TEST(GenerateCorpus, PureFunctionOfSpec) {
  const TaskSpec s = spec_of(TaskKind::kLexiconReorder, 0.1);
  const auto a = generate_corpus(s, 300);
  const auto b = generate_corpus(s, 300);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].src, b.pairs[i].src);
    EXPECT_EQ(a.pairs[i].tgt, b.pairs[i].tgt);
  }
}

TEST(GenerateCorpus, LexiconReorderIsInvertible) {
  const TaskSpec s = spec_of(TaskKind::kLexiconReorder);
  const auto lex = task_lexicon(s);
  std::vector<std::int32_t> inverse(s.vocab_size, -1);
  for (std::size_t i = 0; i < lex.size(); ++i)
    inverse[static_cast<std::size_t>(lex[i])] = static_cast<std::int32_t>(i) + kFirstRegularId;
  for (const auto& p : generate_corpus(s, 300).pairs) {
    TokenSeq back = swap_adjacent_pairs(p.tgt);
    for (auto& t : back) t = inverse[static_cast<std::size_t>(t)];
    EXPECT_EQ(back, p.src);
  }
}

TEST(GenerateCorpus, NoiseTouchesRoughlyTheRequestedFraction) {
  const TaskSpec s = spec_of(TaskKind::kCopy, 0.2);
  std::size_t changed = 0, total = 0;
  for (const auto& p : generate_corpus(s, 2000).pairs)
    for (std::size_t i = 0; i < p.src.size(); ++i) {
      ++total;
      changed += p.src[i] != p.tgt[i];
    }
  // A replacement can redraw the original id (1 in 37).
  const double rate = static_cast<double>(changed) / static_cast<double>(total);
  EXPECT_NEAR(rate, 0.2 * 36.0 / 37.0, 0.015);
}

TEST(GenerateCorpus, InvalidSpecIsConfigError) {
  TaskSpec s = spec_of(TaskKind::kCopy);
  s.len_min = 5;
  s.len_max = 3;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  s = spec_of(TaskKind::kCopy);
  s.noise_rate = 1.0;
  EXPECT_THROW(generate_corpus(s, 10), ConfigError);
  EXPECT_THROW(task_kind_from_string("rot13"), ConfigError);
}

TEST(BuildVocab, CountsTargetSide) {
  ParallelCorpus c;
  c.spec = spec_of(TaskKind::kCopy);
  c.pairs.push_back({{9}, {3, 3, 4}});
  const Vocab v = build_vocab(c);
  EXPECT_EQ(v.frequency(3), 2u);
  EXPECT_EQ(v.frequency(4), 1u);
  EXPECT_EQ(v.frequency(9), 0u);
  EXPECT_EQ(v.frequency(1000), 0u);
}

TEST(BuildVocab, CountsSumToTargetTokens) {
  const auto c = generate_corpus(spec_of(TaskKind::kLexiconReorder, 0.1), 500);
  std::size_t n = 0;
  for (const auto& p : c.pairs) n += p.tgt.size();
  EXPECT_EQ(build_vocab(c).total(), n);
  for (std::int32_t id = 0; id < kFirstRegularId; ++id) EXPECT_EQ(build_vocab(c).frequency(id), 0u);
}

TEST(MakeBatches, GenerousBudgetGivesOneBatch) {
  const auto c = generate_corpus(spec_of(TaskKind::kCopy), 4);
  const auto b = make_batches(c, 1000, 1, true);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].batch_size(), 4u);
}

TEST(MakeBatches, UnshuffledOrderIsStable) {
  const auto c = generate_corpus(spec_of(TaskKind::kCopy), 300);
  const auto a = make_batches(c, 100, 1, false);
  const auto b = make_batches(c, 100, 2, false);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pair_index, b[i].pair_index);
}

TEST(MakeBatches, UnionIsCorpusWithinBudget) {
  const auto c = generate_corpus(spec_of(TaskKind::kReverse, 0.1), 700);
  for (bool shuffle : {false, true}) {
    const auto batches = make_batches(c, 120, 5, shuffle);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) {
      EXPECT_LE(b.batch_size() * std::max(b.src_ids.cols(), b.tgt_len()), 120u);
      for (auto i : b.pair_index) seen.insert(i);
    }
    std::multiset<std::size_t> all;
    for (std::size_t i = 0; i < c.pairs.size(); ++i) all.insert(i);
    EXPECT_EQ(seen, all);
  }
}

TEST(MakeBatches, LayoutInvariants) {
  const auto c = generate_corpus(spec_of(TaskKind::kLexiconReorder, 0.1), 200);
  for (const auto& b : make_batches(c, 150, 3, true)) {
    for (std::size_t r = 0; r < b.batch_size(); ++r) {
      const auto& p = c.pairs[b.pair_index[r]];
      EXPECT_EQ(b.sentence_lengths[r], p.tgt.size());
      EXPECT_EQ(b.tgt_in(r, 0), kBos);
      for (std::size_t j = 0; j < b.tgt_len(); ++j) {
        const bool real = j <= p.tgt.size();
        EXPECT_EQ(b.tgt_valid(r, j), real ? 1 : 0);
        if (j + 1 < b.tgt_len() && b.tgt_valid(r, j + 1)) {
          EXPECT_EQ(b.tgt_in(r, j + 1), b.tgt_out(r, j));
        }
        if (!real) {
          EXPECT_EQ(b.tgt_out(r, j), kPad);
        }
      }
      EXPECT_EQ(b.tgt_out(r, p.tgt.size()), kEos);
      for (std::size_t j = 0; j < b.src_ids.cols(); ++j)
        EXPECT_EQ(b.src_valid(r, j), j < p.src.size() ? 1 : 0);
    }
  }
}

TEST(MakeBatches, SentenceOverBudgetIsContractError) {
  ParallelCorpus c;
  c.spec = spec_of(TaskKind::kCopy);
  c.spec.len_max = 3;
  c.pairs.push_back({{3, 4}, {3, 4}});
  c.pairs.push_back({TokenSeq(20, 5), TokenSeq(20, 5)});
  EXPECT_THROW(make_batches(c, 10, 1, false), ContractError);
  EXPECT_THROW(make_batches(c, 4, 1, false), ContractError);
}

TEST(CorpusText, RoundTripsByteForByte) {
  const auto c = generate_corpus(spec_of(TaskKind::kLexiconReorder, 0.1), 50);
  std::stringstream a;
  write_corpus(a, c);
  std::stringstream in(a.str());
  const auto back = read_corpus(in, c.spec);
  std::stringstream b;
  write_corpus(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find('\t'), std::string::npos);
}

TEST(CorpusText, MalformedLineIsDataError) {
  std::stringstream in("3 4 5\n");
  EXPECT_THROW(read_corpus(in), DataError);
  std::stringstream bad("3 x\t4\n");
  EXPECT_THROW(read_corpus(bad), DataError);
}

}  // namespace
}  // namespace selkd
