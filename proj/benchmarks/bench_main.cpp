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

#include <benchmark/benchmark.h>

#include <random>

#include "gpgnn/layers.hpp"
#include "gpgnn/model.hpp"
#include "gpgnn/synth.hpp"
#include "gpgnn/tensor.hpp"

namespace {

using gpgnn::Rng;
using gpgnn::ad::Tensor;

Tensor random_tensor(gpgnn::ad::Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(gpgnn::ad::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng);
  const Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gpgnn::ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

void BM_LstmSequence(benchmark::State& state) {
  const std::size_t steps = 20, batch = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 60, hidden = 64;
  Rng rng(2);
  const Tensor inputs = random_tensor({steps * batch, in}, rng);
  Tensor wx = random_tensor({in, 4 * hidden}, rng);
  Tensor wh = random_tensor({hidden, 4 * hidden}, rng);
  Tensor b = random_tensor({4 * hidden}, rng);
  const bool backward = state.range(1) != 0;
  wx.set_requires_grad(backward);
  for (auto _ : state) {
    if (backward) {
      gpgnn::ad::Tape tape;
      gpgnn::ad::Tape::Scope scope(tape);
      tape.backward(gpgnn::ad::sum(gpgnn::ad::lstm_sequence(inputs, steps, wx, wh, b, false)));
      wx.clear_grad();
    } else {
      benchmark::DoNotOptimize(gpgnn::ad::lstm_sequence(inputs, steps, wx, wh, b, false));
    }
  }
}
BENCHMARK(BM_LstmSequence)->Args({6, 0})->Args({6, 1})->Args({20, 0})->Args({20, 1});

void BM_SentenceLoss(benchmark::State& state) {
  gpgnn::synth::SynthSpec spec;
  spec.n_sentences = 1;
  spec.min_entities = spec.max_entities = static_cast<std::size_t>(state.range(0));
  const auto corpus = gpgnn::synth::synthesize_multihop_corpus(spec);
  gpgnn::corpus::NormalizationStats stats;
  const auto normalized =
      gpgnn::corpus::normalize_dataset(corpus.train, corpus.inverses, &corpus.relations, stats);
  const auto vocab = gpgnn::corpus::Vocabulary::build(normalized);
  const auto sentence = gpgnn::model::encode_sentence(normalized[0], vocab, corpus.relations);
  gpgnn::model::ModelConfig config;
  config.vocab_size = vocab.size();
  config.num_relations = corpus.relations.size();
  config.lstm_hidden = config.encoder_hidden = config.head_hidden = 256;
  config.layers = 2;
  Rng rng(3);
  const auto model = gpgnn::model::GpGnnModel::create(config, rng);
  const bool backward = state.range(1) != 0;
  for (auto _ : state) {
    if (backward) {
      gpgnn::ad::Tape tape;
      gpgnn::ad::Tape::Scope scope(tape);
      tape.backward(model.sentence_loss(sentence));
    } else {
      benchmark::DoNotOptimize(model.sentence_loss(sentence));
    }
  }
  state.counters["tokens"] = static_cast<double>(sentence.length());
}
BENCHMARK(BM_SentenceLoss)->Args({3, 0})->Args({3, 1})->Args({5, 1})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
