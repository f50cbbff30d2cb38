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

#include "gpgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gpgnn/error.hpp"

namespace gpgnn::ad {
namespace {

double evaluate(const std::function<Tensor()>& loss) {
  const double v = loss().item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: loss is non-finite at a probe point");
  }
  return v;
}

void finalize(GradCheckReport& report, const GradCheckOptions& options) {
  report.relative_error.resize(report.analytic.size());
  report.max_relative_error = 0.0;
  for (std::size_t i = 0; i < report.analytic.size(); ++i) {
    const double e = relative_error(report.analytic[i], report.numeric[i],
                                    options.magnitude_floor);
    report.relative_error[i] = e;
    if (e > report.max_relative_error || i == 0) {
      report.max_relative_error = e;
      report.worst_index = i;
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point,
                           const GradCheckOptions& options) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  Tensor params[] = {x};
  const std::string names[] = {"x"};
  return grad_check_params([&] { return f(x); }, params, names, options);
}

GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  std::span<Tensor> params,
                                  std::span<const std::string> names,
                                  const GradCheckOptions& options) {
  GradCheckReport report;
  for (Tensor& p : params) p.clear_grad();
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor value = loss();
    if (!std::isfinite(value.item())) {
      throw NumericError("grad_check: loss is non-finite at the base point");
    }
    tape.backward(value);
  }
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const bool had_grad = p.has_grad();
    std::vector<double> g = had_grad
                                ? std::vector<double>(p.grad().begin(), p.grad().end())
                                : std::vector<double>(p.numel(), 0.0);
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = evaluate(loss);
      values[i] = original - options.step;
      const double minus = evaluate(loss);
      values[i] = original;
      report.analytic.push_back(g[i]);
      report.numeric.push_back((plus - minus) / (2.0 * options.step));
      labels.push_back((k < names.size() ? names[k] : "param" + std::to_string(k)) +
                       "[" + std::to_string(i) + "]");
    }
    p.clear_grad();
  }
  finalize(report, options);
  if (!labels.empty()) report.worst_label = labels[report.worst_index];
  return report;
}

}  // namespace gpgnn::ad
