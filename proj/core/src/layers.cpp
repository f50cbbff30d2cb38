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

#include "gpgnn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gpgnn/error.hpp"

namespace gpgnn::nn {

using ad::Shape;

Tensor ParameterStore::add(const std::string& name, Tensor tensor,
                           bool trainable, std::vector<std::size_t> frozen_rows) {
  if (params_.contains(name)) {
    throw ConfigError("parameter '" + name + "' registered twice");
  }
  tensor.set_requires_grad(trainable);
  params_.emplace(name, Parameter{tensor, trainable, std::move(frozen_rows)});
  return tensor;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.contains(name);
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.tensor.numel();
  return n;
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy;
  for (const auto& [name, p] : params_) {
    copy.params_.emplace(name, Parameter{p.tensor.clone(), p.trainable,
                                         p.frozen_rows});
  }
  return copy;
}

void ParameterStore::copy_values_from(const ParameterStore& other) {
  if (other.params_.size() != params_.size()) {
    throw ConfigError("copy_values_from: parameter sets differ");
  }
  for (auto& [name, p] : params_) {
    const Parameter& src = other.at(name);
    if (src.tensor.shape() != p.tensor.shape()) {
      throw DimensionError("copy_values_from: '" + name + "' has shape " +
                           ad::shape_string(src.tensor.shape()) + ", expected " +
                           ad::shape_string(p.tensor.shape()));
    }
    std::ranges::copy(src.tensor.values(), p.tensor.mutable_values().begin());
  }
}

void ParameterStore::clear_grads() {
  for (auto& [_, p] : params_) p.tensor.clear_grad();
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ad::shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0) return x;
  if (ctx.rng == nullptr) throw ConfigError("dropout requested without an rng");
  return ad::dropout(x, ctx.dropout, *ctx.rng);
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable EmbeddingTable::create(ParameterStore& store,
                                      const std::string& name, std::size_t rows,
                                      std::size_t dim, Rng& rng, bool trainable,
                                      double init_scale, bool reserve_padding) {
  if (reserve_padding && rows < 2) {
    throw ConfigError("embedding table '" + name +
                      "' needs the padding and unknown rows");
  }
  std::normal_distribution<double> dist(0.0, init_scale);
  std::vector<double> v(rows * dim, 0.0);
  for (std::size_t i = reserve_padding ? dim : 0; i < v.size(); ++i) {
    v[i] = dist(rng);
  }
  std::vector<std::size_t> frozen;
  if (reserve_padding) frozen.push_back(kPaddingRow);
  Tensor w = store.add(name, Tensor(Shape{rows, dim}, std::move(v)), trainable,
                       std::move(frozen));
  return EmbeddingTable{w, trainable};
}

EmbeddingTable EmbeddingTable::bind(const ParameterStore& store,
                                    const std::string& name) {
  const Parameter& p = store.at(name);
  return EmbeddingTable{p.tensor, p.trainable};
}

Tensor embedding_lookup(const EmbeddingTable& table,
                        std::span<const std::size_t> indices) {
  for (std::size_t i : indices) {
    if (i >= table.rows()) {
      throw DimensionError("embedding index " + std::to_string(i) +
                           " >= table rows " + std::to_string(table.rows()));
    }
  }
  return ad::gather_rows(table.weights, indices);
}

// ---------------------------------------------------------------------------
// LSTM

LstmParams LstmParams::create(ParameterStore& store, const std::string& prefix,
                              std::size_t input_dim, std::size_t hidden,
                              Rng& rng) {
  const std::size_t gates = 4 * hidden;
  LstmParams p;
  p.w_x = store.add(prefix + ".w_x",
                    uniform_fan_in(Shape{input_dim, gates}, input_dim, rng));
  p.w_h = store.add(prefix + ".w_h",
                    uniform_fan_in(Shape{hidden, gates}, hidden, rng));
  Tensor b = uniform_fan_in(Shape{gates}, hidden, rng);
  auto bv = b.mutable_values();
  std::fill(bv.begin() + hidden, bv.begin() + 2 * hidden, 1.0);
  p.b = store.add(prefix + ".b", b);
  return p;
}

LstmParams LstmParams::bind(const ParameterStore& store,
                            const std::string& prefix) {
  return LstmParams{store.get(prefix + ".w_x"), store.get(prefix + ".w_h"),
                    store.get(prefix + ".b")};
}

LstmState lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h,
                    const Tensor& c) {
  const std::size_t hidden = p.hidden();
  const bool single = h.rank() == 1;
  const Tensor x2 = x.rank() == 1 ? ad::reshape(x, Shape{1, x.dim(0)}) : x;
  const Tensor h2 = single ? ad::reshape(h, Shape{1, h.dim(0)}) : h;
  const Tensor c2 = c.rank() == 1 ? ad::reshape(c, Shape{1, c.dim(0)}) : c;
  if (x2.dim(1) != p.input_dim() || h2.dim(1) != hidden ||
      c2.shape() != h2.shape() || x2.dim(0) != h2.dim(0)) {
    throw DimensionError("lstm_step: x " + ad::shape_string(x.shape()) +
                         ", h " + ad::shape_string(h.shape()) + ", c " +
                         ad::shape_string(c.shape()) + " do not fit input " +
                         std::to_string(p.input_dim()) + ", hidden " +
                         std::to_string(hidden));
  }
  const Tensor pre = ad::add_bias(
      ad::add(ad::matmul(x2, p.w_x), ad::matmul(h2, p.w_h)), p.b);
  const Tensor i = ad::sigmoid(ad::slice_cols(pre, 0, hidden));
  const Tensor f = ad::sigmoid(ad::slice_cols(pre, hidden, 2 * hidden));
  const Tensor o = ad::sigmoid(ad::slice_cols(pre, 2 * hidden, 3 * hidden));
  const Tensor g = ad::tanh(ad::slice_cols(pre, 3 * hidden, 4 * hidden));
  const Tensor c_next = ad::add(ad::mul(f, c2), ad::mul(i, g));
  const Tensor h_next = ad::mul(o, ad::tanh(c_next));
  if (single) {
    return {ad::reshape(h_next, Shape{hidden}), ad::reshape(c_next, Shape{hidden})};
  }
  return {h_next, c_next};
}

Tensor bilstm_encode_batch(const LstmParams& fwd, const LstmParams& bwd,
                           std::span<const Tensor> steps) {
  if (steps.empty()) throw DimensionError("bilstm_encode: empty sequence");
  return bilstm_encode_stacked(fwd, bwd, ad::concat(steps, 0), steps.size());
}

Tensor bilstm_encode_stacked(const LstmParams& fwd, const LstmParams& bwd,
                             const Tensor& inputs, std::size_t steps) {
  if (fwd.hidden() != bwd.hidden() || fwd.input_dim() != bwd.input_dim()) {
    throw DimensionError("bilstm_encode: direction shapes differ");
  }
  const Tensor f = ad::lstm_sequence(inputs, steps, fwd.w_x, fwd.w_h, fwd.b, false);
  const Tensor b = ad::lstm_sequence(inputs, steps, bwd.w_x, bwd.w_h, bwd.b, true);
  return ad::concat({f, b}, 1);
}

Tensor bilstm_encode(const LstmParams& fwd, const LstmParams& bwd,
                     const Tensor& seq) {
  if (seq.rank() != 2) {
    throw DimensionError("bilstm_encode: expected [l x d], got " +
                         ad::shape_string(seq.shape()));
  }
  std::vector<Tensor> steps;
  steps.reserve(seq.dim(0));
  for (std::size_t t = 0; t < seq.dim(0); ++t) {
    const std::size_t row[] = {t};
    steps.push_back(ad::gather_rows(seq, row));
  }
  const Tensor out = bilstm_encode_batch(fwd, bwd, steps);
  return ad::reshape(out, Shape{2 * fwd.hidden()});
}

// ---------------------------------------------------------------------------
// MLP

MlpParams MlpParams::create(ParameterStore& store, const std::string& prefix,
                            std::span<const std::size_t> dims,
                            Activation activation, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp '" + prefix + "' needs >= 2 dims");
  MlpParams p;
  p.activation = activation;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::string layer = prefix + ".layer" + std::to_string(k);
    p.weights.push_back(store.add(
        layer + ".w", uniform_fan_in(Shape{dims[k], dims[k + 1]}, dims[k], rng)));
    p.biases.push_back(store.add(
        layer + ".b", uniform_fan_in(Shape{dims[k + 1]}, dims[k], rng)));
  }
  return p;
}

MlpParams MlpParams::bind(const ParameterStore& store,
                          const std::string& prefix, std::size_t layers,
                          Activation activation) {
  MlpParams p;
  p.activation = activation;
  for (std::size_t k = 0; k < layers; ++k) {
    const std::string layer = prefix + ".layer" + std::to_string(k);
    p.weights.push_back(store.get(layer + ".w"));
    p.biases.push_back(store.get(layer + ".b"));
  }
  return p;
}

Tensor mlp_forward(const MlpParams& p, const Tensor& x,
                   const ForwardContext& ctx) {
  const bool single = x.rank() == 1;
  Tensor h = single ? ad::reshape(x, Shape{1, x.dim(0)}) : x;
  if (h.rank() != 2 || h.dim(1) != p.input_dim()) {
    throw DimensionError("mlp_forward: input " + ad::shape_string(x.shape()) +
                         " does not match width " +
                         std::to_string(p.input_dim()));
  }
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    h = ad::add_bias(ad::matmul(h, p.weights[k]), p.biases[k]);
    if (k + 1 < p.weights.size()) {
      h = maybe_dropout(ad::activate(p.activation, h), ctx);
    }
  }
  return single ? ad::reshape(h, Shape{p.output_dim()}) : h;
}

}  // namespace gpgnn::nn
