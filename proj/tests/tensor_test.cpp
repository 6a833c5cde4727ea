// tests/tensor_test.cpp

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
#include <sstream>

#include <gtest/gtest.h>

#include "selkd/selkd.hpp"
#include "support/gradcheck_cases.hpp"

namespace selkd {
namespace {

std::vector<double> grad_of(const Tensor& t) {
  return {t.grad().begin(), t.grad().end()};
}

TEST(TensorTest, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x({3}, {1, -2, 5}, true);
  backward(sum(x));
  EXPECT_EQ(grad_of(x), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquaresGivesTwiceX) {
  Tensor x({3}, {1, -2, 5}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(grad_of(x), (std::vector<double>{2, -4, 10}));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x({3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, LossMustBeOnTape) {
  Tensor x({2}, {1, 2}, true);
  const Tensor a = sum(x);
  const Tensor b = sum(scale(x, 3.0));
  EXPECT_THROW(backward(a, Tape::record(b)), ContractError);
}

TEST(Backward, TwoBranchesSumTheirGradients) {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto w1 = testing::random_weights(rng, 4);
    const auto w2 = testing::random_weights(rng, 4);
    Tensor x = testing::random_leaf(rng, {4});
    backward(add(weighted_sum(relu(x), w1), weighted_sum(mul(x, x), w2)));
    const auto both = grad_of(x);
    x.zero_grad();
    backward(weighted_sum(relu(x), w1));
    auto first = grad_of(x);
    x.zero_grad();
    backward(weighted_sum(mul(x, x), w2));
    const auto second = grad_of(x);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(both[i], first[i] + second[i], 1e-14);
  }
}

TEST(Tape, TopologicalOrder) {
  Tensor x({2}, {1, 2}, true);
  Tensor y({2}, {3, 4}, true);
  const Tensor a = mul(x, y);
  const Tensor b = add(a, x);
  const Tensor loss = sum(add(b, a));
  const Tape tape = Tape::record(loss);
  const auto nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& in : nodes[i]->inputs) {
      if (!in->requires_grad) continue;
      const auto pos = std::find(nodes.begin(), nodes.end(), in) - nodes.begin();
      EXPECT_LT(static_cast<std::size_t>(pos), i);
    }
  EXPECT_EQ(nodes.back(), loss.handle());
}

TEST(Tape, NoGradGuardSkipsRecording) {
  Tensor x({2}, {1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(sum(x).requires_grad());
}

TEST(GradCheck, SumOfSquaresAtOneTwo) {
  const auto r = finite_diff_check([](const Tensor& x) { return sum(mul(x, x)); },
                                   Tensor({2}, {1, 2}), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, LogSoftmaxPick) {
  const std::vector<std::int32_t> id{2};
  const std::vector<std::uint8_t> ok{1};
  const auto r = finite_diff_check(
      [&](const Tensor& x) { return sum(pick(log_softmax(x), id, ok)); },
      Tensor({1, 4}, {0.3, -1.2, 0.8, 2.0}), 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
  const auto r = finite_diff_check([](const Tensor&) { return Tensor::scalar(4.0); },
                                   Tensor({3}, {1, 2, 3}), 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
}

TEST(GradCheck, FullModelLoss) {
  Rng rng(123);
  for (int inst = 0; inst < 3; ++inst) {
    const auto r = testing::model_loss_check(rng);
    EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index
                                     << "] analytic " << r.analytic << " numeric "
                                     << r.numeric;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamList p{{"w", Tensor({3}, {1, 2, 3}, true)}};
  p[0].tensor.mutable_grad();
  auto st = make_adam(p, {0.1, 0});
  adam_step(p, st);
  EXPECT_EQ(std::vector<double>(p[0].tensor.values().begin(), p[0].tensor.values().end()),
            (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMatchesClosedForm) {
  ParamList p{{"w", Tensor({1}, {0.5}, true)}};
  p[0].tensor.mutable_grad()[0] = 1.0;
  auto st = make_adam(p, {0.1, 0}, 0.9, 0.98, 1e-9);
  adam_step(p, st);
  // m_hat = g, v_hat = g^2 at t = 1.
  const double expect = 0.5 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-9);
  EXPECT_NEAR(p[0].tensor.values()[0], expect, 1e-15);
}

TEST(Adam, NanGradientNamesBlock) {
  ParamList p{{"enc.0.ff.w1", Tensor({2}, {0, 0}, true)}};
  p[0].tensor.mutable_grad()[1] = std::nan("");
  auto st = make_adam(p);
  try {
    adam_step(p, st);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("enc.0.ff.w1"), std::string::npos);
  }
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, IdenticalRunsAreBitwiseEqual) {
  auto run = [] {
    Rng rng(8);
    ParamList p{{"w", testing::random_leaf(rng, {5})}};
    auto st = make_adam(p);
    for (int s = 0; s < 20; ++s) {
      const auto w = testing::random_weights(rng, 5);
      backward(weighted_sum(mul(p[0].tensor, p[0].tensor), w));
      adam_step(p, st);
      zero_grads(p);
    }
    return std::vector<double>(p[0].tensor.values().begin(), p[0].tensor.values().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(LrSchedule, WarmupThenInverseSqrt) {
  LrSchedule s{1e-3, 100};
  EXPECT_NEAR(s.at(50), 5e-4, 1e-18);
  EXPECT_NEAR(s.at(100), 1e-3, 1e-18);
  EXPECT_NEAR(s.at(400), 5e-4, 1e-18);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(2);
  ParamList p{{"a", testing::random_leaf(rng, {2, 3})},
              {"b.c", Tensor({1}, {std::numeric_limits<double>::infinity()})}};
  std::stringstream ss;
  write_tensors(ss, p);
  const auto q = read_tensors(ss);
  ASSERT_EQ(q.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(q[i].name, p[i].name);
    EXPECT_EQ(q[i].tensor.shape(), p[i].tensor.shape());
    EXPECT_TRUE(std::equal(q[i].tensor.values().begin(), q[i].tensor.values().end(),
                           p[i].tensor.values().begin()));
  }
}

TEST(Checkpoint, LayoutStartsWithMagicAndCount) {
  ParamList p{{"x", Tensor({1}, {1.0})}};
  std::stringstream ss;
  write_tensors(ss, p);
  const std::string bytes = ss.str();
  ASSERT_GE(bytes.size(), 10u);
  EXPECT_EQ(bytes.substr(0, 6), "SELKD1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1);
  EXPECT_EQ(bytes[7], 0);
}

TEST(Checkpoint, BadMagicIsIoError) {
  std::stringstream ss("NOTACKPT");
  EXPECT_THROW(read_tensors(ss), IoError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  Rng c(42), d(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(c.normal(), d.normal());
}

}  // namespace
}  // namespace selkd
