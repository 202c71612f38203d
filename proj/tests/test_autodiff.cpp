/*
 * Copyright 2026 The semloc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "semloc/autodiff.hpp"
#include "semloc/errors.hpp"
#include "gradcheck_cases.hpp"
#include "test_util.hpp"

namespace semloc {
namespace {

using ad::Tape;
using ad::Var;
using testing::random_tensor;

constexpr double kTol = 1e-5;

using testing::off_zero;
using testing::project;

TEST(Tensor, ShapeAndValues) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(Autodiff, TanhAtOrigin) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({0.0}));
  const Var y = ad::tanh(x);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(tape.backward(ad::sum(y))[x][0], 1.0);
}

TEST(Autodiff, MatmulHandArithmetic) {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const Var b = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  const Tensor c = ad::matmul(a, b).value();
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.at(0, 0), 3.0);
  EXPECT_EQ(c.at(1, 0), 7.0);
}

TEST(Autodiff, SoftmaxOfEqualScoresIsUniform) {
  Tape tape;
  const Var s = tape.constant(Tensor::vector({2.0, 2.0}));
  const std::vector<std::size_t> seg{0, 0};
  const Tensor p = ad::softmax_over_segments(s, seg, 1).value();
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Autodiff, SquareGradient) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({3.0}));
  EXPECT_DOUBLE_EQ(tape.backward(ad::dot(x, x))[x][0], 6.0);
}

TEST(Autodiff, DotGradientIsTheOtherOperand) {
  const Tensor w = random_tensor({5}, 3);
  Tape tape;
  const Var x = tape.parameter(random_tensor({5}, 4));
  const Tensor g = tape.backward(ad::dot(x, tape.constant(w)))[x];
  EXPECT_EQ(g, w);
}

TEST(Autodiff, ConstantFunctionHasZeroGradient) {
  const double err = ad::gradcheck([](Var x) { return ad::sum(ad::scale(x, 0.0)); }, random_tensor({4}, 1));
  EXPECT_EQ(err, 0.0);
}

TEST(Autodiff, BackwardRejectsNonScalar) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(ad::tanh(x)), Error);
}

TEST(Autodiff, DetachedLeafIsAnError) {
  Tape tape;
  const Var x = tape.parameter(Tensor::vector({1.0}));
  const Var c = tape.constant(Tensor::vector({2.0}));
  const Var unused = tape.parameter(Tensor::vector({2.0}));
  const auto g = tape.backward(ad::sum(ad::mul(x, c)));
  EXPECT_THROW(g[c], Error);
  // A parameter the output does not depend on has a zero gradient.
  EXPECT_EQ(g[unused], Tensor::vector({0.0}));
}

TEST(Autodiff, ShapeMismatchNamesOp) {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}));
  const Var b = tape.constant(Tensor({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Autodiff, NonFiniteOutputIsNumericFault) {
  Tape tape;
  const Var x = tape.constant(Tensor::vector({1000.0}));
  EXPECT_THROW(ad::exp(x), NumericFault);
}

TEST(Autodiff, SoftmaxSegmentsSumToOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    const Var s = tape.constant(random_tensor({9}, seed, -5, 5));
    const std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2, 1, 0, 2};
    const Tensor p = ad::softmax_over_segments(s, seg, 3).value();
    double sums[3] = {0, 0, 0};
    for (std::size_t i = 0; i < seg.size(); ++i) {
      EXPECT_GE(p[i], 0.0);
      sums[seg[i]] += p[i];
    }
    for (double v : sums) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(Autodiff, L2NormalizeHasUnitNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    const Tensor y = ad::l2_normalize(tape.constant(random_tensor({7}, seed, -3, 3))).value();
    double n = 0.0;
    for (double v : y.values()) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(Autodiff, L2NormalizeZeroVector) {
  Tape tape;
  const Tensor y = ad::l2_normalize(tape.constant(Tensor::vector({0.0, 0.0}))).value();
  EXPECT_EQ(y, Tensor::vector({0.0, 0.0}));
  Tape strict;
  strict.set_strict(true);
  EXPECT_THROW(ad::l2_normalize(strict.constant(Tensor::vector({0.0, 0.0}))), NumericFault);
}

TEST(Autodiff, ReplayIsBitIdentical) {
  auto run = [] {
    Tape tape;
    const Var x = tape.parameter(random_tensor({4, 3}, 11));
    const Var w = tape.parameter(random_tensor({3, 2}, 12));
    const Var y = ad::sum(ad::elu(ad::matmul(x, w)));
    return std::pair{y.value(), tape.backward(y)[w]};
  };
  EXPECT_EQ(run(), run());
}

TEST(Autodiff, ParallelMatmulMatchesSerial) {
  // Large enough to take the threaded path.
  const Tensor a = random_tensor({300, 64}, 1), b = random_tensor({64, 48}, 2);
  auto run = [&](bool parallel) {
    Tape tape;
    tape.set_parallel(parallel);
    const Var x = tape.parameter(a), w = tape.parameter(b);
    const Var y = project(ad::matmul(x, w), 5);
    const auto g = tape.backward(y);
    return std::tuple{y.value(), g[x], g[w]};
  };
  EXPECT_EQ(run(false), run(true));
}

// ---------------------------------------------------------------------------
// Finite-difference checks, ten seeded inputs per primitive.

TEST(Gradcheck, EveryPrimitive) {
  const auto cases = testing::primitive_cases();
  EXPECT_GE(cases.size(), 28u);
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_LT(c.error(seed), kTol) << c.name << " seed " << seed;
  }
}

TEST(Gradcheck, EncoderInfoNce) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    EXPECT_LT(testing::encoder_infonce_error(seed, Mode::kInfer), 1e-4) << seed;
    EXPECT_LT(testing::encoder_infonce_error(seed, Mode::kTrain), 1e-4) << seed;
  }
}

TEST(BatchNorm, TrainingReportsBatchStatistics) {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(3, 1, {1, 2, 6}));
  ad::BatchNormStats observed;
  const ad::BatchNormStats running{Tensor::vector({0.0}), Tensor::vector({1.0})};
  ad::batch_norm(x, tape.constant(Tensor::vector({1.0})), tape.constant(Tensor::vector({0.0})), running, true,
                 &observed);
  EXPECT_DOUBLE_EQ(observed.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(observed.var[0], 7.0);  // unbiased
}

TEST(Gradcheck, ElementwiseSumOfElu) {
  const double err = ad::gradcheck([](Var x) { return ad::sum(ad::elu(x)); }, random_tensor({8}, 42));
  EXPECT_LT(err, 1e-6);
}

}  // namespace
}  // namespace semloc
