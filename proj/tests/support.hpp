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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gpgnn/gradcheck.hpp"
#include "gpgnn/random.hpp"
#include "gpgnn/tensor.hpp"

namespace gpgnn::testing {

inline ad::Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(ad::shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return ad::Tensor(std::move(shape), std::move(values));
}

inline std::vector<double> to_vector(const ad::Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

inline void expect_near_all(const std::vector<double>& actual, const std::vector<double>& expected,
                            double tol) {
  ASSERT_EQ(actual.size(), expected.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    EXPECT_NEAR(actual[i], expected[i], tol) << "index " << i;
  }
}

inline void expect_gradcheck(const ad::GradCheckReport& report, double tol = 1e-4) {
  EXPECT_TRUE(report.passed) << "worst " << report.worst_label << " rel err "
                             << report.max_relative_error;
  EXPECT_LT(report.max_relative_error, tol);
}

}  // namespace gpgnn::testing
