// Copyright 2026 The STAMP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Test-only central-difference oracle. Deliberately independent of the
// library's gradcheck module.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "stamp/tensor.hpp"

namespace stamp::testing {

/// d loss / d x by central differences; `loss` re-evaluates from scratch.
inline std::vector<double> central_difference(Tensor<double>& x,
                                              const std::function<double()>& loss,
                                              double step = 1e-5) {
  std::vector<double> out(x.size());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = loss();
    data[i] = saved - step;
    const double down = loss();
    data[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_relative_error(std::span<const double> analytic,
                                 const std::vector<double>& numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(a - numeric[i]) / denom);
  }
  return worst;
}

/// Deterministic values in [lo, hi] from a simple LCG.
inline std::vector<double> fill_uniform(std::size_t n, unsigned seed, double lo = -2.0,
                                        double hi = 2.0) {
  std::vector<double> v(n);
  unsigned long long s = 0x9E3779B97F4A7C15ULL ^ seed;
  for (auto& x : v) {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    x = lo + (hi - lo) * static_cast<double>(s >> 11) * 0x1.0p-53;
  }
  return v;
}

inline Tensor<double> random_tensor(Shape shape, unsigned seed, bool requires_grad = true,
                                    double lo = -2.0, double hi = 2.0) {
  const std::size_t n = numel(shape);
  return Tensor<double>(std::move(shape), fill_uniform(n, seed, lo, hi), requires_grad);
}

}  // namespace stamp::testing
