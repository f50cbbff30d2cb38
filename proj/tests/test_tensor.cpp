// Copyright 2026 The gpgnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gpgnn/error.hpp"
#include "gpgnn/gradcheck.hpp"
#include "gpgnn/layers.hpp"
#include "gpgnn/tensor.hpp"
#include "support.hpp"

namespace gpgnn {
namespace {

using ad::Tensor;
using testing::expect_gradcheck;
using testing::expect_near_all;
using testing::random_tensor;
using testing::to_vector;

TEST(Matmul, IdentityTimesColumn) {
  const Tensor out = ad::matmul(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{3}, {5}}));
  EXPECT_EQ(out.shape(), (ad::Shape{2, 1}));
  EXPECT_EQ(to_vector(out), (std::vector<double>{3, 5}));
}

TEST(Matmul, OneByOne) {
  EXPECT_EQ(ad::matmul(Tensor::matrix({{2}}), Tensor::matrix({{3}})).item(), 6.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Rng rng(1);
  try {
    ad::matmul(random_tensor({2, 3}, rng), random_tensor({2, 3}, rng));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const Tensor b = random_tensor({4, 2}, rng);
  const Tensor a = random_tensor({3, 4}, rng);
  ad::GradCheckOptions tight;
  tight.tolerance = 1e-6;
  expect_gradcheck(ad::grad_check([&](const Tensor& x) { return ad::sum(ad::matmul(x, b)); }, a,
                                  tight),
                   1e-6);
  expect_gradcheck(ad::grad_check([&](const Tensor& x) { return ad::sum(ad::matmul(a, x)); }, b,
                                  tight),
                   1e-6);
}

TEST(Elementwise, ReluTanhSigmoid) {
  EXPECT_EQ(to_vector(ad::relu(Tensor::vector({-2, 0, 3}))), (std::vector<double>{0, 0, 3}));
  EXPECT_EQ(ad::tanh(Tensor::vector({0})).values()[0], 0.0);
  EXPECT_EQ(ad::sigmoid(Tensor::vector({0})).values()[0], 0.5);
}

TEST(Elementwise, ReshapeIsRowMajor) {
  std::vector<double> v(9);
  std::iota(v.begin(), v.end(), 0.0);
  const Tensor m = ad::reshape(Tensor::vector(v), {3, 3});
  EXPECT_EQ(m.shape(), (ad::Shape{3, 3}));
  EXPECT_EQ(m.at(1, 0), 3.0);
  EXPECT_EQ(m.at(2, 1), 7.0);
  EXPECT_THROW(ad::reshape(Tensor::vector(v), {2, 4}), DimensionError);
}

TEST(Elementwise, ShapeErrors) {
  Rng rng(3);
  EXPECT_THROW(ad::add(random_tensor({2}, rng), random_tensor({3}, rng)), DimensionError);
  EXPECT_THROW(ad::mul(random_tensor({2, 2}, rng), random_tensor({4}, rng)), DimensionError);
  const Tensor parts[] = {random_tensor({2, 3}, rng), random_tensor({3, 3}, rng)};
  EXPECT_THROW(ad::concat(parts, 1), DimensionError);
  EXPECT_NO_THROW(ad::concat(parts, 0));
}

TEST(Elementwise, ConcatAlongColumns) {
  const Tensor out =
      ad::concat({Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}})}, 1);
  EXPECT_EQ(out.shape(), (ad::Shape{2, 3}));
  EXPECT_EQ(to_vector(out), (std::vector<double>{1, 2, 5, 3, 4, 6}));
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
  for (std::size_t target = 0; target < 3; ++target) {
    EXPECT_NEAR(ad::softmax_cross_entropy(Tensor::vector({0, 0, 0}), target).item(),
                std::log(3.0), 1e-15);
  }
}

TEST(SoftmaxCrossEntropy, Saturated) {
  EXPECT_LT(ad::softmax_cross_entropy(Tensor::vector({30, 0}), 0).item(), 1e-9);
}

TEST(SoftmaxCrossEntropy, MatchesDirectFormula) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = random_tensor({5}, rng, -3, 3);
    const std::size_t target = static_cast<std::size_t>(trial % 5);
    double denom = 0.0;
    for (double l : logits.values()) denom += std::exp(l);
    const double expected = -std::log(std::exp(logits[target]) / denom);
    EXPECT_NEAR(ad::softmax_cross_entropy(logits, target).item(), expected, 1e-12);
  }
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHot) {
  Rng rng(5);
  Tensor logits = random_tensor({4}, rng);
  logits.set_requires_grad(true);
  ad::Tape tape;
  {
    ad::Tape::Scope scope(tape);
    tape.backward(ad::softmax_cross_entropy(logits, 2));
  }
  std::vector<double> expected = ad::softmax(logits.values());
  expected[2] -= 1.0;
  expect_near_all({logits.grad().begin(), logits.grad().end()}, expected, 1e-14);
}

TEST(SoftmaxCrossEntropy, TargetOutOfRange) {
  EXPECT_THROW(ad::softmax_cross_entropy(Tensor::vector({0, 0}), 2), DimensionError);
}

TEST(Softmax, IsADistribution) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor logits = random_tensor({7}, rng, -40, 40);
    const auto p = ad::softmax(logits.values());
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

Tensor backprop(const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  tape.backward(f(leaf));
  return leaf;
}

TEST(Backward, SumGivesOnes) {
  const Tensor x = backprop(Tensor::vector({1, -2, 3}), [](const Tensor& t) { return ad::sum(t); });
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SquareGivesTwiceInput) {
  const Tensor x = backprop(Tensor::vector({1, -2, 3}),
                            [](const Tensor& t) { return ad::sum(ad::mul(t, t)); });
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{2, -4, 6}));
}

TEST(Backward, RepeatedUseAccumulates) {
  Rng rng(7);
  const Tensor point = random_tensor({3, 2}, rng);
  const Tensor w = random_tensor({2, 2}, rng);
  for (int uses = 1; uses <= 4; ++uses) {
    const Tensor many = backprop(point, [&](const Tensor& t) {
      Tensor total = ad::sum(ad::tanh(ad::matmul(t, w)));
      for (int k = 1; k < uses; ++k) total = ad::add(total, ad::sum(ad::tanh(ad::matmul(t, w))));
      return total;
    });
    const Tensor once = backprop(point, [&](const Tensor& t) {
      return ad::scale(ad::sum(ad::tanh(ad::matmul(t, w))), static_cast<double>(uses));
    });
    expect_near_all({many.grad().begin(), many.grad().end()},
                    {once.grad().begin(), once.grad().end()}, 1e-14);
  }
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::vector({1, 2});
  x.set_requires_grad(true);
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const Tensor y = ad::scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), DimensionError);
}

TEST(Backward, ConstantsAreNotRecorded) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  ad::relu(ad::matmul(Tensor::matrix({{1}}), Tensor::matrix({{2}})));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(8);
  const auto report = ad::grad_check(
      [](const Tensor& x) { return ad::scale(ad::sum(x), 3.0); }, random_tensor({4, 3}, rng));
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_relative_error, 1e-10);
}

TEST(GradCheck, DetectsAScaledGradient) {
  Rng rng(9);
  // The value is sum(x) but the recorded path carries twice the gradient.
  const auto report = ad::grad_check(
      [](const Tensor& x) { return ad::sub(ad::sum(ad::scale(x, 2.0)), ad::sum(x.detach())); },
      random_tensor({5}, rng));
  EXPECT_FALSE(report.passed);
  EXPECT_NEAR(report.max_relative_error, 0.5, 1e-6);
}

TEST(GradCheck, NonFiniteLossThrows) {
  EXPECT_THROW(ad::grad_check(
                   [](const Tensor& x) {
                     return ad::scale(ad::sum(x), std::numeric_limits<double>::infinity());
                   },
                   Tensor::vector({1.0})),
               NumericError);
}

TEST(GradCheck, BilstmMlpPipeline) {
  Rng rng(10);
  nn::ParameterStore store;
  const auto fwd = nn::LstmParams::create(store, "fwd", 3, 4, rng);
  const auto bwd = nn::LstmParams::create(store, "bwd", 3, 4, rng);
  const std::size_t dims[] = {8, 5, 2};
  const auto mlp = nn::MlpParams::create(store, "mlp", dims, ad::Activation::kTanh, rng);
  const Tensor seq = random_tensor({5, 3}, rng);
  const auto report = ad::grad_check(
      [&](const Tensor& x) { return ad::sum(nn::mlp_forward(mlp, nn::bilstm_encode(fwd, bwd, x))); },
      seq);
  expect_gradcheck(report);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, p] : store.entries()) {
    params.push_back(p.tensor);
    names.push_back(name);
  }
  expect_gradcheck(ad::grad_check_params(
      [&] { return ad::sum(nn::mlp_forward(mlp, nn::bilstm_encode(fwd, bwd, seq))); }, params,
      names));
}

// Every differentiable operation on random inputs in [-1, 1].
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, Elementwise) {
  Rng rng(100 + GetParam());
  const Tensor other = random_tensor({3, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  const std::vector<std::function<Tensor(const Tensor&)>> ops = {
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::add(t, other), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::sub(other, t), t)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::scale(t, -1.7), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::add_bias(t, bias), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::tanh(t), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::sigmoid(t), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::relu(ad::add(t, other)), other)); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::reshape(t, {4, 3}), ad::reshape(other, {4, 3}))); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::concat({t, other}, 1), ad::concat({other, t}, 1))); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::concat({t, other}, 0), ad::concat({other, t}, 0))); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::slice_cols(t, 1, 3), ad::slice_cols(other, 0, 2))); },
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::matmul(t, ad::reshape(other, {4, 3})), ad::matmul(t, ad::reshape(other, {4, 3})))); },
  };
  for (std::size_t k = 0; k < ops.size(); ++k) {
    SCOPED_TRACE("op " + std::to_string(k));
    expect_gradcheck(ad::grad_check(ops[k], x));
  }
}

TEST_P(OpGradient, BiasAndOther) {
  Rng rng(200 + GetParam());
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor weight = random_tensor({3, 4}, rng);
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& b) { return ad::sum(ad::mul(ad::tanh(ad::add_bias(x, b)), weight)); },
      random_tensor({4}, rng)));
}

TEST_P(OpGradient, GatherScatter) {
  Rng rng(300 + GetParam());
  const std::vector<std::size_t> rows = {2, 0, 2, 1};
  const Tensor w = random_tensor({4, 3}, rng);
  const Tensor w2 = random_tensor({5, 3}, rng);
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::gather_rows(t, rows), w)); },
      random_tensor({3, 3}, rng)));
  const std::vector<std::size_t> targets = {4, 0, 4, 2};
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::scatter_add_rows(t, targets, 5), w2)); },
      random_tensor({4, 3}, rng)));
}

TEST_P(OpGradient, BatchedMatvec) {
  Rng rng(400 + GetParam());
  const Tensor a = random_tensor({5, 9}, rng);
  const Tensor x = random_tensor({5, 3}, rng);
  const Tensor w = random_tensor({5, 3}, rng);
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::batched_matvec(t, x), w)); }, a));
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::sum(ad::mul(ad::batched_matvec(a, t), w)); }, x));
}

TEST_P(OpGradient, CrossEntropyRows) {
  Rng rng(500 + GetParam());
  const std::vector<std::size_t> targets = {0, 3, 1};
  const std::vector<double> weights = {1.0, 0.25, 2.0};
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::softmax_cross_entropy_rows(t, targets, weights); },
      random_tensor({3, 4}, rng)));
  expect_gradcheck(ad::grad_check(
      [&](const Tensor& t) { return ad::softmax_cross_entropy(t, 2); }, random_tensor({5}, rng)));
}

TEST_P(OpGradient, LstmSequence) {
  Rng rng(600 + GetParam());
  const std::size_t steps = 4, batch = 3, in = 2, hidden = 3;
  const Tensor inputs = random_tensor({steps * batch, in}, rng);
  const Tensor wx = random_tensor({in, 4 * hidden}, rng);
  const Tensor wh = random_tensor({hidden, 4 * hidden}, rng);
  const Tensor b = random_tensor({4 * hidden}, rng);
  const Tensor w = random_tensor({batch, hidden}, rng);
  for (bool reverse : {false, true}) {
    auto loss = [&](const Tensor& i, const Tensor& x, const Tensor& h, const Tensor& bb) {
      return ad::sum(ad::mul(ad::lstm_sequence(i, steps, x, h, bb, reverse), w));
    };
    expect_gradcheck(ad::grad_check([&](const Tensor& t) { return loss(t, wx, wh, b); }, inputs));
    expect_gradcheck(ad::grad_check([&](const Tensor& t) { return loss(inputs, t, wh, b); }, wx));
    expect_gradcheck(ad::grad_check([&](const Tensor& t) { return loss(inputs, wx, t, b); }, wh));
    expect_gradcheck(ad::grad_check([&](const Tensor& t) { return loss(inputs, wx, wh, t); }, b));
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, OpGradient, ::testing::Range(0, 3));

TEST(LstmSequence, MatchesChainedSteps) {
  Rng rng(11);
  nn::ParameterStore store;
  const auto p = nn::LstmParams::create(store, "lstm", 3, 4, rng);
  const std::size_t steps = 5, batch = 2;
  const Tensor inputs = random_tensor({steps * batch, 3}, rng);
  for (bool reverse : {false, true}) {
    nn::LstmState state{Tensor::zeros({batch, 4}), Tensor::zeros({batch, 4})};
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t t = reverse ? steps - 1 - k : k;
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < batch; ++r) rows.push_back(t * batch + r);
      state = nn::lstm_step(p, ad::gather_rows(inputs, rows), state.h, state.c);
    }
    const Tensor fused = ad::lstm_sequence(inputs, steps, p.w_x, p.w_h, p.b, reverse);
    expect_near_all(to_vector(fused), to_vector(state.h), 1e-14);
  }
}

TEST(Dropout, InvertedScalingAndDeterminism) {
  const Tensor x = Tensor::filled({1000}, 1.0);
  Rng a(12), b(12);
  const Tensor da = ad::dropout(x, 0.25, a);
  const Tensor db = ad::dropout(x, 0.25, b);
  EXPECT_EQ(to_vector(da), to_vector(db));
  std::size_t kept = 0;
  for (double v : da.values()) {
    if (v != 0.0) {
      EXPECT_NEAR(v, 1.0 / 0.75, 1e-15);
      ++kept;
    }
  }
  EXPECT_GT(kept, 650u);
  EXPECT_LT(kept, 850u);
  EXPECT_THROW(ad::dropout(x, 1.0, a), ConfigError);
}

}  // namespace
}  // namespace gpgnn
