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

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpgnn/random.hpp"
#include "gpgnn/tensor.hpp"

namespace gpgnn::nn {

using ad::Activation;
using ad::Tensor;

inline constexpr std::size_t kPaddingRow = 0;
inline constexpr std::size_t kUnknownRow = 1;

struct Parameter {
  Tensor tensor;
  bool trainable = true;
  // Rows (of a matrix parameter) the optimizer must never touch.
  std::vector<std::size_t> frozen_rows;
};

/// Named registry of every model tensor, iterated in name order.
class ParameterStore {
 public:
  /// Registers `tensor` under `name`; names must be unique.
  Tensor add(const std::string& name, Tensor tensor, bool trainable = true,
             std::vector<std::size_t> frozen_rows = {});

  bool contains(const std::string& name) const;
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  Tensor get(const std::string& name) const { return at(name).tensor; }

  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::map<std::string, Parameter>& entries() { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  /// Deep copy: new tensors, same names, values and flags.
  ParameterStore clone() const;
  /// Overwrites values from a store with identical names and shapes.
  void copy_values_from(const ParameterStore& other);
  void clear_grads();

 private:
  std::map<std::string, Parameter> params_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor uniform_fan_in(ad::Shape shape, std::size_t fan_in, Rng& rng);

/// Per-call forward settings. Dropout is active only when training.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

Tensor maybe_dropout(const Tensor& x, const ForwardContext& ctx);

// ---------------------------------------------------------------------------

struct EmbeddingTable {
  Tensor weights;  // [rows x dim]
  bool trainable = true;

  std::size_t rows() const { return weights.dim(0); }
  std::size_t dim() const { return weights.dim(1); }

  /// Rows ~ N(0, init_scale^2). With `reserve_padding` (vocabulary
  /// tables) row 0 is zero and frozen, and rows 0-1 must exist.
  static EmbeddingTable create(ParameterStore& store, const std::string& name,
                               std::size_t rows, std::size_t dim, Rng& rng,
                               bool trainable = true, double init_scale = 1.0,
                               bool reserve_padding = true);
  static EmbeddingTable bind(const ParameterStore& store,
                             const std::string& name);
};

/// Gathers table rows; the backward pass touches only the looked-up rows.
Tensor embedding_lookup(const EmbeddingTable& table,
                        std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------

/// Gate blocks are packed column-wise in the order input, forget, output,
/// candidate: w_x is [input x 4H], w_h is [H x 4H], b is [4H].
struct LstmParams {
  Tensor w_x;
  Tensor w_h;
  Tensor b;

  std::size_t input_dim() const { return w_x.dim(0); }
  std::size_t hidden() const { return w_h.dim(0); }

  /// Fan-in uniform init with the forget-gate bias set to 1.
  static LstmParams create(ParameterStore& store, const std::string& prefix,
                           std::size_t input_dim, std::size_t hidden, Rng& rng);
  static LstmParams bind(const ParameterStore& store, const std::string& prefix);
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// One LSTM step. Accepts single vectors ([d], [H], [H]) or row batches
/// ([B x d], [B x H], [B x H]); the result has the rank of `h`.
LstmState lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h,
                    const Tensor& c);

/// Forward LSTM left to right, backward LSTM right to left, both from zero
/// state; returns [h_fwd(l-1); h_bwd(0)] of width 2H.
Tensor bilstm_encode(const LstmParams& fwd, const LstmParams& bwd,
                     const Tensor& seq);

/// Batched variant over B equal-length sequences given as one [B x d]
/// tensor per time step. Returns [B x 2H].
Tensor bilstm_encode_batch(const LstmParams& fwd, const LstmParams& bwd,
                           std::span<const Tensor> steps);

/// Same as bilstm_encode_batch with the steps stacked time-major into one
/// [l*B x d] tensor.
Tensor bilstm_encode_stacked(const LstmParams& fwd, const LstmParams& bwd,
                             const Tensor& inputs, std::size_t steps);

// ---------------------------------------------------------------------------

/// Affine layers W_k ([in x out]) and b_k, with the activation between
/// layers and none after the last.
struct MlpParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation activation = Activation::kRelu;

  std::size_t input_dim() const { return weights.front().dim(0); }
  std::size_t output_dim() const { return weights.back().dim(1); }

  /// dims = {input, hidden..., output}.
  static MlpParams create(ParameterStore& store, const std::string& prefix,
                          std::span<const std::size_t> dims,
                          Activation activation, Rng& rng);
  static MlpParams bind(const ParameterStore& store, const std::string& prefix,
                        std::size_t layers, Activation activation);
};

/// x is [in] or [B x in]. Dropout (ctx) applies to hidden activations.
Tensor mlp_forward(const MlpParams& p, const Tensor& x,
                   const ForwardContext& ctx = {});

}  // namespace gpgnn::nn
