// Copyright 2026 The STAMP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "stamp/ops.hpp"
#include "support/finite_difference.hpp"

namespace stamp {
namespace {

using Td = Tensor<double>;

TEST(TensorTest, ShapeAndDataMustAgree) {
  EXPECT_THROW(Td({2, 3}, std::vector<double>(5)), ShapeError);
  Td t({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  Td eye({2, 2}, {1, 0, 0, 1});
  Td m({2, 2}, {1, 2, 3, 4});
  auto out = matmul(eye, m);
  EXPECT_EQ(std::vector<double>(out.data().begin(), out.data().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(MatmulTest, RowTimesColumn) {
  auto out = matmul(Td({1, 2}, {1, 2}), Td({2, 1}, {3, 4}));
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.item(), 11.0);
}

TEST(MatmulTest, GradientOfSumMatchesFiniteDifferences) {
  Td a({2, 2}, {1, 0, 0, 1}, true);
  Td b({2, 2}, {2, 3, 4, 5});
  sum(matmul(a, b)).backward();
  // frozen from a central-difference run (step 1e-5, f64)
  const std::vector<double> expected{5, 9, 5, 9};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.grad()[i], expected[i], 1e-9);

  auto numeric = testing::central_difference(a, [&] { return sum(matmul(a, b)).item(); });
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(numeric[i], expected[i], 1e-8);
}

TEST(MatmulTest, MismatchNamesBothShapes) {
  try {
    matmul(Td::zeros({2, 3}), Td::zeros({2, 2}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[2, 2]"), std::string::npos);
  }
}

TEST(MatmulTest, LeadingAxesAreBatched) {
  auto a = testing::random_tensor({2, 3, 4}, 1, false);
  auto b = testing::random_tensor({4, 5}, 2, false);
  auto out = matmul(a, b);
  ASSERT_EQ(out.shape(), (Shape{2, 3, 5}));
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += a[r * 4 + k] * b[k * 5 + j];
      EXPECT_NEAR(out[r * 5 + j], acc, 1e-12);
    }
  }
}

TEST(GeluTest, ZeroAndAsymptotes) {
  auto out = gelu(Td({3}, {0.0, 12.0, -12.0}));
  EXPECT_DOUBLE_EQ(out[0], 0.0);
  EXPECT_NEAR(out[1], 12.0, 1e-9);
  EXPECT_NEAR(out[2], 0.0, 1e-9);
}

TEST(GeluTest, ExactErfFormAtOne) {
  // x * Phi(x) with Phi(1) = 0.5 * (1 + erf(1 / sqrt 2))
  const double oracle = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  auto out = gelu(Td({1}, {1.0}));
  EXPECT_NEAR(out[0], oracle, 1e-15);
  EXPECT_NEAR(out[0], 0.8413447, 1e-7);
  // the tanh approximation differs in the fourth decimal
  const double tanh_form =
      0.5 * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (1.0 + 0.044715)));
  EXPECT_GT(std::abs(out[0] - tanh_form), 1e-5);
}

TEST(SoftmaxTest, UniformInput) {
  auto out = softmax(Td({3}, {0, 0, 0}), 0);
  for (double v : out.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  auto out = softmax(Tensor<float>({2}, {1000.f, 0.f}), 0);
  EXPECT_TRUE(std::isfinite(out[0]));
  EXPECT_NEAR(out[0], 1.0f, 1e-6f);
  EXPECT_NEAR(out[1], 0.0f, 1e-6f);
}

TEST(SoftmaxTest, DirectExponentiationOracle) {
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  auto out = softmax(Td({3}, {1, 2, 3}), 0);
  EXPECT_NEAR(out[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(out[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(out[2], std::exp(3.0) / z, 1e-15);
  EXPECT_NEAR(out[0], 0.0900, 5e-5);
  EXPECT_NEAR(out[1], 0.2447, 5e-5);
  EXPECT_NEAR(out[2], 0.6652, 5e-5);
}

TEST(SoftmaxTest, PropertyNonnegativeAndNormalizedOnEveryAxis) {
  for (unsigned seed = 0; seed < 50; ++seed) {
    auto x = testing::random_tensor({3, 4, 5}, seed, false, -30.0, 30.0);
    for (long axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      auto totals = sum_axis(y, axis);
      for (double v : y.data()) EXPECT_GE(v, 0.0);
      for (double t : totals.data()) EXPECT_NEAR(t, 1.0, 1e-6);
    }
  }
}

TEST(LayerNormTest, ConstantVectorNormalizesToZero) {
  auto out = layer_norm(Td({4}, {3, 3, 3, 3}), Td::full({4}, 1.0), Td::zeros({4}), 1e-5);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(LayerNormTest, AlreadyNormalized) {
  auto out = layer_norm(Td({2}, {1, -1}), Td::full({2}, 1.0), Td::zeros({2}), 1e-12);
  EXPECT_NEAR(out[0], 1.0, 1e-9);
  EXPECT_NEAR(out[1], -1.0, 1e-9);
}

TEST(LayerNormTest, MeanVarianceOracle) {
  // mean 2, biased variance 2/3
  const double s = std::sqrt(2.0 / 3.0 + 1e-5);
  auto out = layer_norm(Td({3}, {1, 2, 3}), Td::full({3}, 1.0), Td::zeros({3}), 1e-5);
  EXPECT_NEAR(out[0], -1.0 / s, 1e-12);
  EXPECT_NEAR(out[1], 0.0, 1e-12);
  EXPECT_NEAR(out[2], 1.0 / s, 1e-12);
  EXPECT_NEAR(out[0], -1.2247, 1e-3);
  EXPECT_NEAR(out[2], 1.2247, 1e-3);
}

TEST(DropoutTest, IdentityWhenNotTrainingOrZeroRate) {
  auto x = testing::random_tensor({10}, 3, false);
  auto off = dropout(x, 0.3, false, CounterRng(7));
  auto zero = dropout(x, 0.0, true, CounterRng(7));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(off[i], x[i]);
    EXPECT_EQ(zero[i], x[i]);
  }
}

TEST(DropoutTest, RateOutOfRangeIsConfigError) {
  auto x = Td::zeros({2});
  EXPECT_THROW(dropout(x, 1.0, true, CounterRng(1)), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, false, CounterRng(1)), ConfigError);
}

TEST(DropoutTest, MonteCarloExpectationMatchesInput) {
  const double rate = 0.3;
  const std::size_t draws = 10000;
  Td x({4}, {1.0, -2.0, 0.5, 3.0});
  std::vector<double> acc(4, 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    auto y = dropout(x, rate, true, CounterRng(derive_key({99, k})));
    for (std::size_t i = 0; i < 4; ++i) acc[i] += y[i];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double mean = acc[i] / draws;
    // each draw is x/(1-p) w.p. 1-p, else 0: variance x^2 p/(1-p)
    const double sigma = std::abs(x[i]) * std::sqrt(rate / (1 - rate) / draws);
    EXPECT_NEAR(mean, x[i], 3 * sigma) << "element " << i;
  }
}

TEST(DropoutTest, SameKeySameMask) {
  auto x = testing::random_tensor({64}, 5, false);
  auto a = dropout(x, 0.5, true, CounterRng(derive_key({1, 2, 3, 4})));
  auto b = dropout(x, 0.5, true, CounterRng(derive_key({1, 2, 3, 4})));
  auto c = dropout(x, 0.5, true, CounterRng(derive_key({1, 2, 3, 5})));
  bool differs = false;
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(a[i], b[i]);
    differs = differs || a[i] != c[i];
  }
  EXPECT_TRUE(differs);
}

TEST(BackwardTest, SumGivesOnes) {
  auto x = testing::random_tensor({2, 3, 2}, 4);
  sum(x).backward();
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, SquareGivesTwoX) {
  Td x({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(BackwardTest, NonScalarLossIsUsageError) {
  auto x = testing::random_tensor({3}, 1);
  EXPECT_THROW(scale(x, 2.0).backward(), UsageError);
}

TEST(BackwardTest, DetachedLossIsUsageError) {
  auto x = testing::random_tensor({3}, 1, false);
  EXPECT_THROW(sum(x).backward(), UsageError);
}

TEST(BackwardTest, GradientsAccumulateAcrossPassesAndZeroGradResets) {
  Td x({2}, {1, 2}, true);
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 3.0)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(BackwardTest, UnusedLeafGetsNoGradient) {
  Td used({2}, {1, 2}, true);
  Td unused({2}, {3, 4}, true);
  auto other = mul(unused, unused);  // on the tape, but not on the loss path
  (void)other;
  sum(used).backward();
  EXPECT_FALSE(unused.has_grad());
}

TEST(BackwardTest, UntrackedInputsProduceUntrackedOutputs) {
  auto a = testing::random_tensor({3}, 1, false);
  auto out = gelu(add(a, a));
  EXPECT_FALSE(out.requires_grad());
  EXPECT_TRUE(out.node()->parents.empty());
}

TEST(LayoutTest, PermuteRoundTrip) {
  auto x = testing::random_tensor({2, 3, 4}, 9, false);
  auto y = permute(permute(x, {2, 0, 1}), {1, 2, 0});
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(LayoutTest, PermuteMovesElements) {
  auto x = testing::random_tensor({2, 3, 4}, 9, false);
  auto y = permute(x, {2, 0, 1});  // [4, 2, 3]
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(y[(k * 2 + i) * 3 + j], x[(i * 3 + j) * 4 + k]);
}

TEST(LayoutTest, ConcatThenSplitRecoversParts) {
  auto a = testing::random_tensor({2, 3, 2}, 1, false);
  auto b = testing::random_tensor({2, 3, 5}, 2, false);
  auto parts = split(concat<double>({a, b}, -1), -1, {2, 5});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(parts[0][i], a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(parts[1][i], b[i]);
  EXPECT_THROW(split(a, -1, {1, 2}), ShapeError);
}

TEST(LayoutTest, BroadcastAddRequiresTrailingShape) {
  auto x = testing::random_tensor({2, 3, 4}, 1, false);
  EXPECT_NO_THROW(broadcast_add(x, Td::zeros({3, 4})));
  EXPECT_THROW(broadcast_add(x, Td::zeros({2, 3})), ShapeError);
}

TEST(CrossEntropyTest, UniformAndCertainPredictions) {
  auto uniform = cross_entropy(Td({1, 4}, {0, 0, 0, 0}), std::vector<std::uint32_t>{2});
  EXPECT_NEAR(uniform.item(), std::log(4.0), 1e-12);
  auto certain = cross_entropy(Td({1, 2}, {800, 0}), std::vector<std::uint32_t>{0});
  EXPECT_NEAR(certain.item(), 0.0, 1e-12);
}

TEST(CrossEntropyTest, LogSumExpOracle) {
  auto loss = cross_entropy(Td({1, 2}, {2, 0}), std::vector<std::uint32_t>{0});
  EXPECT_NEAR(loss.item(), std::log(std::exp(2.0) + 1.0) - 2.0, 1e-12);
  EXPECT_NEAR(loss.item(), 0.1269, 5e-5);
}

TEST(CrossEntropyTest, InvalidLabelIsDataError) {
  EXPECT_THROW(cross_entropy(Td({1, 2}, {0, 0}), std::vector<std::uint32_t>{2}), DataError);
}

TEST(RngTest, CounterStreamIsReproducibleAndPlatformFixed) {
  CounterRng a(derive_key({42, 1})), b(derive_key({42, 1}));
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  // pinned values guard against accidental algorithm changes
  EXPECT_EQ(mix64(0), 0xE220A8397B1DCDAFULL);
  CounterRng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Backward, NoGradGuardSuppressesGraphAndRestores) {
  Tensor<double> w({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(mul(w, w).requires_grad());
    {
      NoGradGuard nested;
    }
    EXPECT_FALSE(add(w, w).requires_grad());
  }
  EXPECT_TRUE(mul(w, w).requires_grad());
}

}  // namespace
}  // namespace stamp
