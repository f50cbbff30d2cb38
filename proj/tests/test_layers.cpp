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

#include "gpgnn/error.hpp"
#include "gpgnn/layers.hpp"
#include "support.hpp"

namespace gpgnn::nn {
namespace {

using ad::Tensor;
using testing::expect_gradcheck;
using testing::expect_near_all;
using testing::random_tensor;
using testing::to_vector;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmParams zero_lstm(std::size_t in, std::size_t hidden) {
  return {Tensor::zeros({in, 4 * hidden}), Tensor::zeros({hidden, 4 * hidden}),
          Tensor::zeros({4 * hidden})};
}

TEST(Embedding, PaddingRowIsZero) {
  Rng rng(1);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "words", 5, 4, rng);
  const std::size_t idx[] = {0};
  EXPECT_EQ(to_vector(embedding_lookup(table, idx)), std::vector<double>(4, 0.0));
  EXPECT_EQ(store.at("words").frozen_rows, std::vector<std::size_t>{kPaddingRow});
}

TEST(Embedding, RepeatedIndexGivesIdenticalRows) {
  Rng rng(2);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "words", 5, 3, rng);
  const std::size_t idx[] = {2, 2};
  const Tensor rows = embedding_lookup(table, idx);
  EXPECT_EQ(rows.shape(), (ad::Shape{2, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(rows.at(0, c), rows.at(1, c));
    EXPECT_EQ(rows.at(0, c), table.weights.at(2, c));
  }
}

TEST(Embedding, GradientTouchesOnlyLookedUpRows) {
  Rng rng(3);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "words", 6, 3, rng);
  const std::size_t idx[] = {3};
  Tensor params[] = {table.weights};
  const std::string names[] = {"words"};
  const auto report =
      ad::grad_check_params([&] { return ad::sum(embedding_lookup(table, idx)); }, params, names);
  expect_gradcheck(report);
  for (std::size_t row = 0; row < 6; ++row) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(report.analytic[row * 3 + c], row == 3 ? 1.0 : 0.0);
    }
  }
}

TEST(Embedding, IndexOutOfRange) {
  Rng rng(4);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "words", 4, 2, rng);
  const std::size_t idx[] = {4};
  EXPECT_THROW(embedding_lookup(table, idx), DimensionError);
}

TEST(Embedding, SparseGradientProperty) {
  Rng rng(5);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "words", 10, 4, rng);
  const std::vector<std::size_t> idx = {1, 7, 7, 4};
  Tensor w = table.weights;
  ad::Tape tape;
  {
    ad::Tape::Scope scope(tape);
    tape.backward(ad::sum(ad::tanh(embedding_lookup(table, idx))));
  }
  for (std::size_t row = 0; row < 10; ++row) {
    const bool used = row == 1 || row == 7 || row == 4;
    for (std::size_t c = 0; c < 4; ++c) {
      if (!used) EXPECT_EQ(w.grad()[row * 4 + c], 0.0) << "row " << row;
    }
  }
}

TEST(LstmStep, ZeroParametersZeroCell) {
  const auto p = zero_lstm(2, 3);
  const auto out = lstm_step(p, Tensor::vector({0.3, -0.7}), Tensor::zeros({3}), Tensor::zeros({3}));
  EXPECT_EQ(to_vector(out.c), std::vector<double>(3, 0.0));
  EXPECT_EQ(to_vector(out.h), std::vector<double>(3, 0.0));
}

TEST(LstmStep, ZeroParametersUnitCell) {
  const auto p = zero_lstm(1, 1);
  const auto out = lstm_step(p, Tensor::vector({0.9}), Tensor::zeros({1}), Tensor::vector({1.0}));
  EXPECT_DOUBLE_EQ(out.c[0], 0.5);
  EXPECT_NEAR(out.h[0], 0.5 * std::tanh(0.5), 1e-15);
  EXPECT_NEAR(out.h[0], 0.23105, 1e-5);
}

TEST(LstmStep, MatchesHandCodedGates) {
  Rng rng(6);
  ParameterStore store;
  const std::size_t in = 3, hidden = 4;
  const auto p = LstmParams::create(store, "lstm", in, hidden, rng);
  const Tensor x = random_tensor({in}, rng);
  const Tensor h = random_tensor({hidden}, rng);
  const Tensor c = random_tensor({hidden}, rng);
  const auto out = lstm_step(p, x, h, c);
  std::vector<double> h_expected(hidden), c_expected(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    double pre[4];
    for (std::size_t g = 0; g < 4; ++g) {
      const std::size_t col = g * hidden + k;
      double z = p.b[col];
      for (std::size_t r = 0; r < in; ++r) z += x[r] * p.w_x.at(r, col);
      for (std::size_t r = 0; r < hidden; ++r) z += h[r] * p.w_h.at(r, col);
      pre[g] = z;
    }
    const double i = sigmoid(pre[0]), f = sigmoid(pre[1]), o = sigmoid(pre[2]);
    const double g = std::tanh(pre[3]);
    c_expected[k] = f * c[k] + i * g;
    h_expected[k] = o * std::tanh(c_expected[k]);
  }
  expect_near_all(to_vector(out.c), c_expected, 1e-12);
  expect_near_all(to_vector(out.h), h_expected, 1e-12);
}

TEST(LstmStep, ForgetBiasStartsAtOne) {
  Rng rng(7);
  ParameterStore store;
  const auto p = LstmParams::create(store, "lstm", 2, 3, rng);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p.b[3 + k], 1.0);
}

TEST(LstmStep, ShapeMismatch) {
  const auto p = zero_lstm(2, 3);
  EXPECT_THROW(lstm_step(p, Tensor::vector({1, 2, 3}), Tensor::zeros({3}), Tensor::zeros({3})),
               DimensionError);
}

TEST(Bilstm, ZeroParametersGiveZeros) {
  Rng rng(8);
  const Tensor out = bilstm_encode(zero_lstm(3, 2), zero_lstm(3, 2), random_tensor({4, 3}, rng));
  EXPECT_EQ(to_vector(out), std::vector<double>(4, 0.0));
}

TEST(Bilstm, SingleTokenHalvesAreSingleSteps) {
  Rng rng(9);
  ParameterStore store;
  const auto fwd = LstmParams::create(store, "f", 3, 2, rng);
  const auto bwd = LstmParams::create(store, "b", 3, 2, rng);
  const Tensor seq = random_tensor({1, 3}, rng);
  const Tensor x = ad::reshape(seq, {3});
  const Tensor out = bilstm_encode(fwd, bwd, seq);
  const auto hf = lstm_step(fwd, x, Tensor::zeros({2}), Tensor::zeros({2})).h;
  const auto hb = lstm_step(bwd, x, Tensor::zeros({2}), Tensor::zeros({2})).h;
  expect_near_all(to_vector(out), {hf[0], hf[1], hb[0], hb[1]}, 1e-14);
}

TEST(Bilstm, SwappingDirectionsAndReversingSwapsHalves) {
  Rng rng(10);
  ParameterStore store;
  const auto fwd = LstmParams::create(store, "f", 3, 4, rng);
  const auto bwd = LstmParams::create(store, "b", 3, 4, rng);
  const Tensor seq = random_tensor({6, 3}, rng);
  const std::vector<std::size_t> reversed = {5, 4, 3, 2, 1, 0};
  const Tensor a = bilstm_encode(fwd, bwd, seq);
  const Tensor b = bilstm_encode(bwd, fwd, ad::gather_rows(seq, reversed));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a[k], b[4 + k]);
    EXPECT_EQ(a[4 + k], b[k]);
  }
}

TEST(Bilstm, WidthIsTwiceHiddenForEveryLength) {
  Rng rng(11);
  ParameterStore store;
  const auto fwd = LstmParams::create(store, "f", 2, 5, rng);
  const auto bwd = LstmParams::create(store, "b", 2, 5, rng);
  for (std::size_t len = 1; len <= 8; ++len) {
    EXPECT_EQ(bilstm_encode(fwd, bwd, random_tensor({len, 2}, rng)).shape(), (ad::Shape{10}));
  }
}

TEST(Bilstm, EmptySequenceRejected) {
  const auto p = zero_lstm(2, 2);
  EXPECT_THROW(bilstm_encode_batch(p, p, {}), DimensionError);
}

TEST(Bilstm, BatchedAndStackedMatchPerSequence) {
  Rng rng(12);
  ParameterStore store;
  const auto fwd = LstmParams::create(store, "f", 3, 4, rng);
  const auto bwd = LstmParams::create(store, "b", 3, 4, rng);
  const std::size_t len = 5, batch = 3;
  std::vector<Tensor> seqs, steps;
  for (std::size_t b = 0; b < batch; ++b) seqs.push_back(random_tensor({len, 3}, rng));
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<Tensor> rows;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r[] = {t};
      rows.push_back(ad::gather_rows(seqs[b], r));
    }
    steps.push_back(ad::concat(rows, 0));
  }
  const Tensor batched = bilstm_encode_batch(fwd, bwd, steps);
  const Tensor stacked = bilstm_encode_stacked(fwd, bwd, ad::concat(steps, 0), len);
  ASSERT_EQ(batched.shape(), (ad::Shape{batch, 8}));
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor single = bilstm_encode(fwd, bwd, seqs[b]);
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_NEAR(batched.at(b, k), single[k], 1e-14);
      EXPECT_NEAR(stacked.at(b, k), single[k], 1e-14);
    }
  }
}

TEST(Mlp, IdentityWeightsPassNonnegativeInput) {
  const MlpParams p{{Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}),
                     Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})},
                    {Tensor::zeros({3}), Tensor::zeros({3})},
                    ad::Activation::kRelu};
  const Tensor x = Tensor::vector({0.5, 0.0, 2.0});
  EXPECT_EQ(to_vector(mlp_forward(p, x)), to_vector(x));
}

TEST(Mlp, ZeroWeightsGiveBias) {
  const MlpParams p{{Tensor::zeros({2, 3})}, {Tensor::vector({1, -2, 3})}, ad::Activation::kRelu};
  EXPECT_EQ(to_vector(mlp_forward(p, Tensor::vector({4, 5}))), (std::vector<double>{1, -2, 3}));
}

TEST(Mlp, MatchesHandComposedChain) {
  Rng rng(13);
  ParameterStore store;
  const std::size_t dims[] = {4, 5, 3};
  for (auto act : {ad::Activation::kRelu, ad::Activation::kTanh}) {
    const auto p = MlpParams::create(store, "mlp" + ad::activation_name(act), dims, act, rng);
    const Tensor x = random_tensor({4}, rng);
    std::vector<double> hidden(5), out(3);
    for (std::size_t j = 0; j < 5; ++j) {
      double z = p.biases[0][j];
      for (std::size_t i = 0; i < 4; ++i) z += x[i] * p.weights[0].at(i, j);
      hidden[j] = act == ad::Activation::kRelu ? std::max(0.0, z) : std::tanh(z);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double z = p.biases[1][j];
      for (std::size_t i = 0; i < 5; ++i) z += hidden[i] * p.weights[1].at(i, j);
      out[j] = z;
    }
    expect_near_all(to_vector(mlp_forward(p, x)), out, 1e-12);
  }
}

TEST(Mlp, WidthMismatch) {
  const MlpParams p{{Tensor::zeros({2, 3})}, {Tensor::zeros({3})}, ad::Activation::kRelu};
  EXPECT_THROW(mlp_forward(p, Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(LayerGradients, EveryLayerPassesGradCheck) {
  Rng rng(14);
  ParameterStore store;
  const auto table = EmbeddingTable::create(store, "embed", 6, 3, rng);
  const auto fwd = LstmParams::create(store, "fwd", 3, 3, rng);
  const auto bwd = LstmParams::create(store, "bwd", 3, 3, rng);
  const std::size_t dims[] = {6, 4, 4, 2};
  const auto mlp = MlpParams::create(store, "mlp", dims, ad::Activation::kTanh, rng);
  const std::vector<std::size_t> tokens = {2, 5, 1, 3};
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, p] : store.entries()) {
    params.push_back(p.tensor);
    names.push_back(name);
  }
  expect_gradcheck(ad::grad_check_params(
      [&] {
        const Tensor seq = embedding_lookup(table, tokens);
        return ad::sum(mlp_forward(mlp, bilstm_encode(fwd, bwd, seq)));
      },
      params, names));
}

TEST(ParameterStore, CloneIsDeepAndCopyBackWorks) {
  Rng rng(15);
  ParameterStore store;
  store.add("a", random_tensor({2, 2}, rng));
  store.add("b", random_tensor({3}, rng), false);
  ParameterStore copy = store.clone();
  copy.at("a").tensor.mutable_values()[0] += 1.0;
  EXPECT_NE(copy.get("a")[0], store.get("a")[0]);
  EXPECT_FALSE(copy.at("b").trainable);
  store.copy_values_from(copy);
  EXPECT_EQ(copy.get("a")[0], store.get("a")[0]);
  EXPECT_THROW(store.add("a", random_tensor({1}, rng)), ConfigError);
  EXPECT_EQ(store.scalar_count(), 7u);
}

}  // namespace
}  // namespace gpgnn::nn
