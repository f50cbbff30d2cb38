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

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Operations record themselves on the thread's active Tape (see Tape::Scope)
// whenever at least one input requires a gradient. Without an active tape
// they evaluate eagerly and produce constants, which is what inference and
// finite-difference probing use.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gpgnn::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Cache-line aligned allocator. Vectorized kernels then see the same
/// alignment on every run, which keeps floating-point results reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct TensorNode {
  Shape shape;
  Buffer value;
  // Empty until a backward pass (or the caller) touches it.
  Buffer grad;
  bool requires_grad = false;
};

/// Shared handle to a tensor node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> mutable_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy of the values with no tape history.
  Tensor detach() const;
  /// Deep copy preserving requires_grad.
  Tensor clone() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// Ordered record of differentiable operations. Inputs of every op are
/// either leaves or outputs of earlier ops, so reverse iteration is a valid
/// topological order for backpropagation.
class Tape {
 public:
  struct Op {
    const char* name;
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* name, std::vector<std::shared_ptr<TensorNode>> inputs,
              std::shared_ptr<TensorNode> output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  /// reverse. Gradients accumulate into existing buffers.
  void backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }
  const std::vector<Op>& ops() const { return ops_; }
  void clear() { ops_.clear(); }

  static Tape* active();

  /// Makes a tape the active recorder for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Op> ops_;
};

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Row-wise matrix-vector products: out[n] = reshape(a[n], d x d) * x[n].
Tensor batched_matvec(const Tensor& a, const Tensor& x);

/// LSTM over a time-major batch: rows [t*B, (t+1)*B) of `inputs` are step
/// t. Gates are packed (input, forget, output, candidate) in w_x [D x 4H],
/// w_h [H x 4H] and bias [4H]; the initial state is zero. With `reverse`
/// the steps run from last to first. Returns the final hidden state [B x H].
/// Equivalent to chaining the single-step gate equations, with one fused
/// backward pass through time.
Tensor lstm_sequence(const Tensor& inputs, std::size_t steps, const Tensor& w_x,
                     const Tensor& w_h, const Tensor& bias, bool reverse);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a[r x c] + bias[c] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

enum class Activation : std::uint8_t { kRelu, kTanh };
Tensor activate(Activation act, const Tensor& a);
std::string activation_name(Activation act);
Activation parse_activation(const std::string& name);

// Structural.
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates along `axis`; all other extents must agree.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// out[rows[k]] += a[k]; out has `out_rows` rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> rows,
                        std::size_t out_rows);

// Reductions and losses.
Tensor sum(const Tensor& a);
/// -log softmax(logits)[target] for a 1-D logit vector.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);
/// Sum over rows of weights[r] * -log softmax(logits[r])[targets[r]].
Tensor softmax_cross_entropy_rows(const Tensor& logits,
                                  std::span<const std::size_t> targets,
                                  std::span<const double> weights);

/// Inverted dropout. Kept units are scaled by 1/(1-rate).
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

/// Numerically stable softmax of a plain vector.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace gpgnn::ad
