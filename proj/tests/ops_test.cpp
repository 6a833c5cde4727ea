// tests/ops_test.cpp

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

#include <cmath>

#include <gtest/gtest.h>

#include "selkd/selkd.hpp"
#include "support/gradcheck_cases.hpp"

namespace selkd {
namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v, bool grad = false) {
  return Tensor({r, c}, std::move(v), grad);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor out = matmul(mat(2, 2, {1, 0, 0, 1}), mat(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, ProjectorKeepsFirstRow) {
  const Tensor out = matmul(mat(2, 2, {1, 0, 0, 0}), mat(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()),
            (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(3);
  const Tensor a = testing::random_leaf(rng, {3, 4});
  const Tensor b = testing::random_leaf(rng, {4, 2});
  const Tensor out = matmul(a, b);
  ASSERT_EQ(out.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k)
        s += a.values()[i * 4 + k] * b.values()[k * 2 + j];
      EXPECT_NEAR(out.values()[i * 2 + j], s, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(LogSoftmax, UniformRow) {
  const Tensor out = log_softmax(Tensor({4}, {0, 0, 0, 0}));
  for (double x : out.values()) EXPECT_NEAR(x, -std::log(4.0), 1e-15);
}

TEST(LogSoftmax, LargeLogitsDoNotOverflow) {
  const Tensor out = log_softmax(Tensor({2}, {1000, 0}));
  EXPECT_NEAR(out.values()[0], 0.0, 1e-12);
  EXPECT_NEAR(out.values()[1], -1000.0, 1e-9);
}

TEST(LogSoftmax, MatchesExtendedPrecisionFormula) {
  const Tensor out = log_softmax(Tensor({3}, {1, 2, 3}));
  long double z = 0;
  for (int i = 1; i <= 3; ++i) z += std::exp(static_cast<long double>(i));
  for (int i = 1; i <= 3; ++i) {
    const long double ref = std::log(std::exp(static_cast<long double>(i)) / z);
    EXPECT_NEAR(out.values()[i - 1], static_cast<double>(ref), 1e-10);
  }
}

TEST(LogSoftmax, EmptyLastDimensionIsAnError) {
  EXPECT_THROW(log_softmax(Tensor({2, 0}, {})), DimensionError);
}

TEST(LogSoftmax, RowsNormalizeForLargeMagnitudes) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(7);
    for (auto& x : v) x = 1e3 * rng.uniform(-1.0, 1.0);
    const Tensor out = log_softmax(Tensor({7}, v));
    double s = 0.0;
    for (double x : out.values()) {
      ASSERT_TRUE(std::isfinite(x));
      s += std::exp(x);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  const Tensor out = layer_norm(Tensor({1, 4}, {3, 3, 3, 3}), Tensor({4}, {1, 1, 1, 1}),
                                Tensor({4}, {0, 0, 0, 0}), 1e-5);
  for (double x : out.values()) EXPECT_EQ(x, 0.0);
}

TEST(LayerNorm, NormalizedRowIsFixedPoint) {
  const Tensor out = layer_norm(Tensor({1, 2}, {1, -1}), Tensor({2}, {1, 1}),
                                Tensor({2}, {0, 0}), 1e-12);
  EXPECT_NEAR(out.values()[0], 1.0, 1e-9);
  EXPECT_NEAR(out.values()[1], -1.0, 1e-9);
}

TEST(LayerNorm, RandomRowHasUnitMoments) {
  Rng rng(5);
  const Tensor x = testing::random_leaf(rng, {1, 16}, 3.0);
  const Tensor out = layer_norm(x, Tensor({16}, std::vector<double>(16, 1.0)),
                                Tensor::zeros({16}), 1e-12);
  double mean = 0.0, var = 0.0;
  for (double v : out.values()) mean += v;
  mean /= 16.0;
  for (double v : out.values()) var += (v - mean) * (v - mean);
  var /= 16.0;
  EXPECT_LT(std::abs(mean), 1e-7);
  EXPECT_LT(std::abs(var - 1.0), 1e-6);
}

TEST(EmbeddingLookup, GathersRows) {
  const Tensor table({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::int32_t> ids{0};
  const Tensor out = embedding_lookup(table, ids, {1, 1});
  EXPECT_EQ(out.values()[0], 1.0);
  EXPECT_EQ(out.values()[1], 2.0);
}

TEST(EmbeddingLookup, RepeatedIdsAccumulateGradient) {
  const Tensor table({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::vector<std::int32_t> ids{1, 1, 1, 2};
  backward(sum(embedding_lookup(table, ids, {2, 2})));
  const std::vector<double> expect{0, 0, 3, 3, 1, 1};
  EXPECT_EQ(std::vector<double>(table.grad().begin(), table.grad().end()), expect);
}

TEST(EmbeddingLookup, MatchesLoopOracle) {
  Rng rng(9);
  const Tensor table = testing::random_leaf(rng, {6, 3});
  std::vector<std::int32_t> ids(10);
  for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(6));
  const Tensor out = embedding_lookup(table, ids, {2, 5});
  ASSERT_EQ(out.shape(), (Shape{2, 5, 3}));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(out.values()[i * 3 + c],
                table.values()[static_cast<std::size_t>(ids[i]) * 3 + c]);
}

TEST(EmbeddingLookup, OutOfRangeIdReportsPosition) {
  const std::vector<std::int32_t> ids{0, 7};
  try {
    embedding_lookup(Tensor::zeros({3, 2}), ids, {1, 2});
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Dropout, SameSeedSameMask) {
  const Tensor x({100}, std::vector<double>(100, 1.0));
  Rng a(4), b(4);
  const Tensor ya = dropout(x, 0.5, a);
  const Tensor yb = dropout(x, 0.5, b);
  EXPECT_TRUE(std::equal(ya.values().begin(), ya.values().end(), yb.values().begin()));
  for (double v : ya.values()) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

// Every differentiable op against central differences, 10 random instances.
class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto cases = testing::op_grad_cases();
  const auto& c = cases.at(GetParam());
  Rng rng(derive_seed(77, GetParam()));
  for (int inst = 0; inst < 10; ++inst) {
    const auto r = c.run(rng);
    EXPECT_LE(r.max_rel_error, 1e-4)
        << c.name << " instance " << inst << " worst " << r.worst_param << "["
        << r.worst_index << "] analytic " << r.analytic << " numeric " << r.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range<std::size_t>(0, testing::op_grad_cases().size()),
                         [](const auto& info) {
                           return testing::op_grad_cases()[info.param].name;
                         });

}  // namespace
}  // namespace selkd
