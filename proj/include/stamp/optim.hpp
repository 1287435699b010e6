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


// AdamW with decoupled weight decay and the one-cycle learning-rate schedule.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "stamp/errors.hpp"
#include "stamp/model.hpp"

namespace stamp {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Bias-corrected Adam moments; decay p ← p − lr·wd·p is applied before the
/// moment update and never enters the moments.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedTable<T>> tables, AdamWOptions options = {})
      : tables_(std::move(tables)), options_(options) {
    for (const auto& t : tables_) {
      first_.emplace_back(t.value.size(), 0.0);
      second_.emplace_back(t.value.size(), 0.0);
    }
  }

  /// Applies one update. A non-finite gradient aborts before any table is
  /// touched.
  void step(double lr) {
    for (const auto& t : tables_) {
      if (!t.value.has_grad()) continue;
      const auto g = t.value.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i]))) {
          throw DivergenceError("non-finite gradient in table '" + t.name + "' at index " +
                                std::to_string(i));
        }
      }
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const double decay = 1.0 - lr * options_.weight_decay;
    for (std::size_t k = 0; k < tables_.size(); ++k) {
      auto p = tables_[k].value.mutable_data();
      const bool has_grad = tables_[k].value.has_grad();
      const auto g = has_grad ? tables_[k].value.grad() : std::span<const T>{};
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
        p[i] = static_cast<T>(static_cast<double>(p[i]) * decay - lr * update);
      }
    }
  }

  std::size_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

 private:
  std::vector<NamedTable<T>> tables_;
  AdamWOptions options_;
  std::vector<std::vector<double>> first_, second_;
  std::size_t steps_ = 0;
};

struct OneCycleOptions {
  double initial_lr = 5e-5;
  double max_lr = 3e-4;
  double pct_start = 0.3;
  double final_div = 1e4;  // terminal LR = initial_lr / final_div
};

/// Cosine rise from the initial to the peak LR over the first pct_start of
/// the steps, then cosine decay to initial_lr / final_div at `total`.
class OneCycleSchedule {
 public:
  OneCycleSchedule(std::size_t total_steps, OneCycleOptions options = {})
      : total_(total_steps), options_(options) {
    if (total_steps == 0) throw ConfigError("one-cycle schedule needs at least one step");
    if (!(options.pct_start > 0.0 && options.pct_start < 1.0)) {
      throw ConfigError("pct_start must lie in (0, 1)");
    }
    if (!(options.initial_lr > 0.0 && options.max_lr >= options.initial_lr)) {
      throw ConfigError("one-cycle needs 0 < initial_lr <= max_lr");
    }
    if (!(options.final_div >= 1.0)) throw ConfigError("final_div must be >= 1");
    peak_ = static_cast<std::size_t>(std::llround(options.pct_start * static_cast<double>(total_)));
  }

  double lr(std::size_t step) const {
    if (step > total_) throw UsageError("schedule step past the end");
    if (step <= peak_) {
      if (peak_ == 0) return options_.max_lr;
      return anneal(options_.initial_lr, options_.max_lr,
                    static_cast<double>(step) / static_cast<double>(peak_));
    }
    return anneal(options_.max_lr, final_lr(),
                  static_cast<double>(step - peak_) / static_cast<double>(total_ - peak_));
  }

  std::size_t peak_step() const { return peak_; }
  std::size_t total_steps() const { return total_; }
  double final_lr() const { return options_.initial_lr / options_.final_div; }

 private:
  static double anneal(double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  }

  std::size_t total_;
  OneCycleOptions options_;
  std::size_t peak_ = 0;
};

}  // namespace stamp
