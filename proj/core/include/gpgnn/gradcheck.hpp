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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gpgnn/tensor.hpp"

namespace gpgnn::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged against finite-difference noise instead of 0.
  double magnitude_floor = 1e-5;
};

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> relative_error;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_label;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares the tape gradient of scalar-valued `f` at `point` with central
/// differences. `f` must build its result from the tensor it is handed.
/// Throws NumericError if `f` is non-finite at a probe point.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point,
                           const GradCheckOptions& options = {});

/// Same check over every coordinate of several leaf tensors (typically model
/// parameters). `loss` is re-evaluated after each in-place perturbation.
GradCheckReport grad_check_params(const std::function<Tensor()>& loss,
                                  std::span<Tensor> params,
                                  std::span<const std::string> names,
                                  const GradCheckOptions& options = {});

}  // namespace gpgnn::ad
