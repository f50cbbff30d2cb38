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

#include "gpgnn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gpgnn/error.hpp"

namespace gpgnn::ad {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<TensorNode>;

Buffer& grad_of(TensorNode* node) {
  if (node->grad.empty()) node->grad.assign(node->value.size(), 0.0);
  return node->grad;
}

ConstMatMap as_matrix(const TensorNode* node, std::size_t rows,
                      std::size_t cols) {
  return ConstMatMap(node->value.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Buffer& buffer, std::size_t rows,
                 std::size_t cols) {
  return MatMap(buffer.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

// Builds the output node and, when anything upstream needs a gradient and a
// tape is recording, attaches the backward rule produced by `make_backward`.
template <typename MakeBackward>
Tensor finish(const char* name, std::initializer_list<const Tensor*> inputs,
              Shape shape, Buffer value,
              MakeBackward&& make_backward) {
  auto out = std::make_shared<TensorNode>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  Tape* tape = g_active_tape;
  bool needs_grad = false;
  for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  if (tape != nullptr && needs_grad) {
    out->requires_grad = true;
    std::vector<NodePtr> nodes;
    nodes.reserve(inputs.size());
    for (const Tensor* t : inputs) nodes.push_back(t->shared_node());
    std::function<void()> fn = make_backward(out.get());
    tape->record(name, std::move(nodes), out, std::move(fn));
  }
  return Tensor(std::move(out));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const char* name, const Tensor& a, Forward&& forward,
             Derivative&& derivative) {
  Buffer out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  TensorNode* an = a.node();
  return finish(name, {&a}, a.shape(), std::move(out),
                [an, derivative](TensorNode* o) {
                  return [an, o, derivative] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      g[i] += o->grad[i] * derivative(an->value[i], o->value[i]);
                    }
                  };
                });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_string(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value.assign(values.begin(), values.end());
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on non-scalar tensor " +
                         shape_string(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) on " + shape_string(shape()));
  return node_->value[row * node_->shape[1] + col];
}

std::span<double> Tensor::mutable_grad() { return grad_of(node_.get()); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<TensorNode>();
  node->shape = shape();
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.set_requires_grad(node_->requires_grad);
  return copy;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::record(const char* name, std::vector<NodePtr> inputs, NodePtr output,
                  std::function<void()> backward) {
  ops_.push_back(
      Op{name, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error("backward: loss does not depend on any tensor requiring grad");
  }
  grad_of(loss.node())[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

Tape::Scope::~Scope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw Error("backward: no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Buffer out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node(), m, k) *
                                   as_matrix(b.node(), k, n);
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return finish("matmul", {&a, &b}, Shape{m, n}, std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    ConstMatMap g(o->grad.data(), static_cast<Eigen::Index>(m),
                                  static_cast<Eigen::Index>(n));
                    if (an->requires_grad) {
                      as_matrix(grad_of(an), m, k).noalias() +=
                          g * as_matrix(bn, k, n).transpose();
                    }
                    if (bn->requires_grad) {
                      as_matrix(grad_of(bn), k, n).noalias() +=
                          as_matrix(an, m, k).transpose() * g;
                    }
                  };
                });
}

Tensor lstm_sequence(const Tensor& inputs, std::size_t steps, const Tensor& w_x,
                     const Tensor& w_h, const Tensor& bias, bool reverse) {
  require_rank2(inputs, "lstm_sequence");
  require_rank2(w_x, "lstm_sequence");
  require_rank2(w_h, "lstm_sequence");
  const std::size_t hidden = w_h.dim(0);
  const std::size_t gates = 4 * hidden;
  const std::size_t in_dim = inputs.dim(1);
  if (steps == 0 || inputs.dim(0) % steps != 0 || w_x.dim(0) != in_dim ||
      w_x.dim(1) != gates || w_h.dim(1) != gates || bias.rank() != 1 ||
      bias.dim(0) != gates) {
    throw DimensionError("lstm_sequence: inputs " + shape_string(inputs.shape()) +
                         " over " + std::to_string(steps) + " steps, w_x " +
                         shape_string(w_x.shape()) + ", w_h " +
                         shape_string(w_h.shape()) + ", bias " +
                         shape_string(bias.shape()));
  }
  const std::size_t batch = inputs.dim(0) / steps;
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(hidden);
  const auto G = static_cast<Eigen::Index>(gates);
  const auto rows = static_cast<Eigen::Index>(steps * batch);

  // Per time step t (time order, not processing order): activated gates,
  // the cell state after t, and the hidden state fed into t.
  auto acts = std::make_shared<RowMat>(rows, G);
  auto cells = std::make_shared<RowMat>(rows, H);
  auto h_prev = std::make_shared<RowMat>(rows, H);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.values().data(), G);
  acts->noalias() = as_matrix(inputs.node(), steps * batch, in_dim) *
                    as_matrix(w_x.node(), in_dim, gates);
  acts->rowwise() += b;
  const ConstMatMap wh = as_matrix(w_h.node(), hidden, gates);
  RowMat h = RowMat::Zero(B, H);
  RowMat c = RowMat::Zero(B, H);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    const auto r0 = static_cast<Eigen::Index>(t * batch);
    auto a = acts->middleRows(r0, B);
    h_prev->middleRows(r0, B) = h;
    a.noalias() += h * wh;
    auto sig = a.leftCols(3 * H).array();
    sig = 1.0 / (1.0 + (-sig).exp());
    a.rightCols(H).array() = a.rightCols(H).array().tanh();
    c.array() = a.middleCols(H, H).array() * c.array() +
                a.leftCols(H).array() * a.rightCols(H).array();
    cells->middleRows(r0, B) = c;
    h.array() = a.middleCols(2 * H, H).array() * c.array().tanh();
  }
  Buffer out(h.data(), h.data() + h.size());
  TensorNode* xn = inputs.node();
  TensorNode* wxn = w_x.node();
  TensorNode* whn = w_h.node();
  TensorNode* bn = bias.node();
  return finish("lstm_sequence", {&inputs, &w_x, &w_h, &bias}, Shape{batch, hidden},
                std::move(out), [=](TensorNode* o) {
    return [=] {
      RowMat d_pre(rows, G);
      RowMat dh = ConstMatMap(o->grad.data(), B, H);
      RowMat dc = RowMat::Zero(B, H);
      const ConstMatMap wh_b = as_matrix(whn, hidden, gates);
      for (std::size_t k = steps; k-- > 0;) {
        const std::size_t t = reverse ? steps - 1 - k : k;
        const auto r0 = static_cast<Eigen::Index>(t * batch);
        const auto a = acts->middleRows(r0, B).array();
        const auto in_g = a.leftCols(H);
        const auto fg = a.middleCols(H, H);
        const auto og = a.middleCols(2 * H, H);
        const auto gg = a.rightCols(H);
        const Eigen::ArrayXXd tc = cells->middleRows(r0, B).array().tanh();
        dc.array() += dh.array() * og * (1.0 - tc * tc);
        Eigen::ArrayXXd c_before;
        if (k == 0) {
          c_before = Eigen::ArrayXXd::Zero(B, H);
        } else {
          const std::size_t t_before = reverse ? t + 1 : t - 1;
          c_before = cells->middleRows(static_cast<Eigen::Index>(t_before * batch), B).array();
        }
        auto d = d_pre.middleRows(r0, B);
        d.leftCols(H).array() = dc.array() * gg * in_g * (1.0 - in_g);
        d.middleCols(H, H).array() = dc.array() * c_before * fg * (1.0 - fg);
        d.middleCols(2 * H, H).array() = dh.array() * tc * og * (1.0 - og);
        d.rightCols(H).array() = dc.array() * in_g * (1.0 - gg * gg);
        dc.array() *= fg;
        if (k > 0) dh.noalias() = d * wh_b.transpose();
      }
      if (whn->requires_grad) {
        as_matrix(grad_of(whn), hidden, gates).noalias() += h_prev->transpose() * d_pre;
      }
      if (wxn->requires_grad) {
        as_matrix(grad_of(wxn), in_dim, gates).noalias() +=
            as_matrix(xn, steps * batch, in_dim).transpose() * d_pre;
      }
      if (bn->requires_grad) {
        Eigen::Map<Eigen::RowVectorXd>(grad_of(bn).data(), G) += d_pre.colwise().sum();
      }
      if (xn->requires_grad) {
        as_matrix(grad_of(xn), steps * batch, in_dim).noalias() +=
            d_pre * as_matrix(wxn, in_dim, gates).transpose();
      }
    };
  });
}

Tensor batched_matvec(const Tensor& a, const Tensor& x) {
  require_rank2(a, "batched_matvec");
  require_rank2(x, "batched_matvec");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (a.dim(0) != rows || a.dim(1) != d * d) {
    throw DimensionError("batched_matvec: " + shape_string(a.shape()) +
                         " cannot act on " + shape_string(x.shape()));
  }
  Buffer out(rows * d, 0.0);
  auto av = a.values();
  auto xv = x.values();
  for (std::size_t n = 0; n < rows; ++n) {
    const double* an = av.data() + n * d * d;
    const double* xn = xv.data() + n * d;
    double* on = out.data() + n * d;
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += an[r * d + c] * xn[c];
      on[r] = acc;
    }
  }
  TensorNode* anode = a.node();
  TensorNode* xnode = x.node();
  return finish("batched_matvec", {&a, &x}, Shape{rows, d}, std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    const double* g = o->grad.data();
                    if (anode->requires_grad) {
                      double* ga = grad_of(anode).data();
                      for (std::size_t n = 0; n < rows; ++n) {
                        for (std::size_t r = 0; r < d; ++r) {
                          const double gr = g[n * d + r];
                          for (std::size_t c = 0; c < d; ++c) {
                            ga[n * d * d + r * d + c] +=
                                gr * xnode->value[n * d + c];
                          }
                        }
                      }
                    }
                    if (xnode->requires_grad) {
                      double* gx = grad_of(xnode).data();
                      for (std::size_t n = 0; n < rows; ++n) {
                        for (std::size_t r = 0; r < d; ++r) {
                          const double gr = g[n * d + r];
                          for (std::size_t c = 0; c < d; ++c) {
                            gx[n * d + c] +=
                                anode->value[n * d * d + r * d + c] * gr;
                          }
                        }
                      }
                    }
                  };
                });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return finish("add", {&a, &b}, a.shape(), std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    for (TensorNode* in : {an, bn}) {
                      if (!in->requires_grad) continue;
                      auto& g = grad_of(in);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        g[i] += o->grad[i];
                      }
                    }
                  };
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return finish("sub", {&a, &b}, a.shape(), std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    if (an->requires_grad) {
                      auto& g = grad_of(an);
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
                    }
                    if (bn->requires_grad) {
                      auto& g = grad_of(bn);
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
                    }
                  };
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return finish("mul", {&a, &b}, a.shape(), std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    if (an->requires_grad) {
                      auto& g = grad_of(an);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        g[i] += o->grad[i] * bn->value[i];
                      }
                    }
                    if (bn->requires_grad) {
                      auto& g = grad_of(bn);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        g[i] += o->grad[i] * an->value[i];
                      }
                    }
                  };
                });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t cols = a.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != cols) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(a.shape()));
  }
  const std::size_t rows = a.numel() / cols;
  Buffer out(a.values().begin(), a.values().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bias[c];
  }
  TensorNode* an = a.node();
  TensorNode* bn = bias.node();
  return finish("add_bias", {&a, &bias}, a.shape(), std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    if (an->requires_grad) {
                      auto& g = grad_of(an);
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
                    }
                    if (bn->requires_grad) {
                      auto& g = grad_of(bn);
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) {
                          g[c] += o->grad[r * cols + c];
                        }
                      }
                    }
                  };
                });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor activate(Activation act, const Tensor& a) {
  switch (act) {
    case Activation::kRelu:
      return relu(a);
    case Activation::kTanh:
      return tanh(a);
  }
  throw ConfigError("unknown activation");
}

std::string activation_name(Activation act) {
  return act == Activation::kRelu ? "relu" : "tanh";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu|tanh)");
}

// ---------------------------------------------------------------------------
// Structural

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                         " as " + shape_string(shape));
  }
  TensorNode* an = a.node();
  return finish("reshape", {&a}, std::move(shape),
                Buffer(a.values().begin(), a.values().end()),
                [=](TensorNode* o) {
                  return [=] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
                  };
                });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: " + shape_string(s) +
                           " does not agree with " + shape_string(first) +
                           " off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_chunk = out_shape[axis] * inner;

  Buffer out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> chunks;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    auto v = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * chunk, chunk,
                  out.data() + o * out_chunk + offset);
    }
    offsets.push_back(offset);
    chunks.push_back(chunk);
    offset += chunk;
  }

  std::vector<NodePtr> nodes;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    nodes.push_back(p.shared_node());
    needs_grad = needs_grad || p.requires_grad();
  }
  auto result = std::make_shared<TensorNode>();
  result->shape = std::move(out_shape);
  result->value = std::move(out);
  Tape* tape = Tape::active();
  if (tape != nullptr && needs_grad) {
    result->requires_grad = true;
    TensorNode* o = result.get();
    std::vector<TensorNode*> raw;
    for (const auto& n : nodes) raw.push_back(n.get());
    tape->record("concat", std::move(nodes), result,
                 [=] {
                   for (std::size_t k = 0; k < raw.size(); ++k) {
                     if (!raw[k]->requires_grad) continue;
                     auto& g = grad_of(raw[k]);
                     for (std::size_t ob = 0; ob < outer; ++ob) {
                       const double* src =
                           o->grad.data() + ob * out_chunk + offsets[k];
                       double* dst = g.data() + ob * chunks[k];
                       for (std::size_t i = 0; i < chunks[k]; ++i) dst[i] += src[i];
                     }
                   }
                 });
  }
  return Tensor(std::move(result));
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(a.shape()));
  }
  const std::size_t width = end - begin;
  Buffer out(rows * width);
  auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(v.data() + r * cols + begin, width, out.data() + r * width);
  }
  TensorNode* an = a.node();
  return finish("slice_cols", {&a}, Shape{rows, width}, std::move(out),
                [=](TensorNode* o) {
                  return [=] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < width; ++c) {
                        g[r * cols + begin + c] += o->grad[r * width + c];
                      }
                    }
                  };
                });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank2(a, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t n = a.dim(0), cols = a.dim(1);
  Buffer out(rows.size() * cols);
  auto v = a.values();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= n) {
      throw DimensionError("gather_rows: index " + std::to_string(rows[k]) +
                           " out of range for " + shape_string(a.shape()));
    }
    std::copy_n(v.data() + rows[k] * cols, cols, out.data() + k * cols);
  }
  TensorNode* an = a.node();
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return finish("gather_rows", {&a}, Shape{rows.size(), cols}, std::move(out),
                [an, cols, index = std::move(index)](TensorNode* o) {
                  return [an, o, cols, index] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t k = 0; k < index.size(); ++k) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        g[index[k] * cols + c] += o->grad[k * cols + c];
                      }
                    }
                  };
                });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> rows,
                        std::size_t out_rows) {
  require_rank2(a, "scatter_add_rows");
  const std::size_t k_rows = a.dim(0), cols = a.dim(1);
  if (rows.size() != k_rows) {
    throw DimensionError("scatter_add_rows: " + std::to_string(rows.size()) +
                         " targets for " + shape_string(a.shape()));
  }
  Buffer out(out_rows * cols, 0.0);
  auto v = a.values();
  for (std::size_t k = 0; k < k_rows; ++k) {
    if (rows[k] >= out_rows) {
      throw DimensionError("scatter_add_rows: target row " +
                           std::to_string(rows[k]) + " >= " +
                           std::to_string(out_rows));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out[rows[k] * cols + c] += v[k * cols + c];
    }
  }
  TensorNode* an = a.node();
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return finish("scatter_add_rows", {&a}, Shape{out_rows, cols}, std::move(out),
                [an, cols, index = std::move(index)](TensorNode* o) {
                  return [an, o, cols, index] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t k = 0; k < index.size(); ++k) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        g[k * cols + c] += o->grad[index[k] * cols + c];
                      }
                    }
                  };
                });
}

// ---------------------------------------------------------------------------
// Reductions and losses

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  TensorNode* an = a.node();
  return finish("sum", {&a}, Shape{}, {total}, [=](TensorNode* o) {
    return [=] {
      if (!an->requires_grad) return;
      auto& g = grad_of(an);
      for (double& x : g) x += o->grad[0];
    };
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  if (logits.rank() != 1) {
    throw DimensionError("softmax_cross_entropy: expected a vector, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t c = logits.dim(0);
  const std::size_t t[] = {target};
  const double w[] = {1.0};
  return softmax_cross_entropy_rows(reshape(logits, Shape{1, c}), t, w);
}

Tensor softmax_cross_entropy_rows(const Tensor& logits,
                                  std::span<const std::size_t> targets,
                                  std::span<const double> weights) {
  require_rank2(logits, "softmax_cross_entropy_rows");
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  if (targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy_rows: " +
                         std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()));
  }
  if (!weights.empty() && weights.size() != rows) {
    throw DimensionError("softmax_cross_entropy_rows: weight count mismatch");
  }
  Buffer probs(rows * c);
  double total = 0.0;
  auto v = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= c) {
      throw DimensionError("softmax_cross_entropy: target " +
                           std::to_string(targets[r]) + " out of range for " +
                           std::to_string(c) + " classes");
    }
    const double* row = v.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(row[j] - log_z);
    }
    const double w = weights.empty() ? 1.0 : weights[r];
    total += w * (log_z - row[targets[r]]);
  }
  TensorNode* ln = logits.node();
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  Buffer wts(weights.begin(), weights.end());
  return finish("softmax_cross_entropy", {&logits}, Shape{}, {total},
                [=, probs = std::move(probs), tgt = std::move(tgt),
                 wts = std::move(wts)](TensorNode* o) {
                  return [=] {
                    if (!ln->requires_grad) return;
                    auto& g = grad_of(ln);
                    const double up = o->grad[0];
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double w = (wts.empty() ? 1.0 : wts[r]) * up;
                      for (std::size_t j = 0; j < c; ++j) {
                        const double onehot = j == tgt[r] ? 1.0 : 0.0;
                        g[r * c + j] += w * (probs[r * c + j] - onehot);
                      }
                    }
                  };
                });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  Buffer mask(a.numel());
  for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * mask[i];
  TensorNode* an = a.node();
  return finish("dropout", {&a}, a.shape(), std::move(out),
                [an, mask = std::move(mask)](TensorNode* o) {
                  return [an, o, mask] {
                    if (!an->requires_grad) return;
                    auto& g = grad_of(an);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      g[i] += o->grad[i] * mask[i];
                    }
                  };
                });
}

}  // namespace gpgnn::ad
