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


// Finite-difference audit of the model's analytic gradients in f64.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stamp/model.hpp"
#include "stamp/ops.hpp"

namespace stamp {

/// The 3 x 2 grid configuration used for gradient audits.
inline StampConfig tiny_config() {
  StampConfig c;
  c.spatial = 3;
  c.temporal = 2;
  c.embed_width = 8;
  c.model_width = 8;
  c.blocks = 2;
  c.hidden = 4;
  c.heads = 2;
  c.queries = 2;
  c.n_classes = 2;
  return c;
}

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-6;  // denominator floor for the relative error
  std::size_t batch = 2;
  std::uint64_t seed = 7;
  /// Test hook: may rewrite a table's analytic gradient before comparison.
  std::function<void(const std::string& table, std::span<double> grad)> tamper;
};

struct TableCheck {
  std::string name;
  std::size_t size = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<TableCheck> tables;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(tables.begin(), tables.end(), [](const auto& t) { return t.passed; });
  }
  double worst() const {
    double w = 0.0;
    for (const auto& t : tables) w = std::max(w, t.max_relative_error);
    return w;
  }
};

/// Compares backprop against central differences for every parameter
/// table, on a random batch with fixed dropout masks.
inline GradcheckReport run_gradcheck(const StampConfig& config, const GradcheckOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  auto params = init_params<double>(config, opt.seed);
  CounterRng rng(derive_key({opt.seed, 0x9c}));
  const Shape shape{opt.batch, config.spatial, config.temporal, config.embed_width};
  std::vector<double> x(numel(shape));
  for (auto& v : x) v = rng.normal();
  const Tensor<double> batch(shape, std::move(x));
  std::vector<std::uint32_t> labels(opt.batch);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<std::uint32_t>(i % config.n_classes);
  }
  auto loss = [&] {
    ForwardContext ctx{true, derive_key({opt.seed, 0xd0}), 0};
    return cross_entropy(forward_logits(params, config, batch, ctx), labels);
  };

  params.zero_grad();
  loss().backward();
  GradcheckReport report;
  report.tolerance = opt.tolerance;
  for (auto& table : params.named()) {
    std::vector<double> analytic(table.value.size(), 0.0);
    if (table.value.has_grad()) {
      const auto g = table.value.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    if (opt.tamper) opt.tamper(table.name, analytic);
    TableCheck tc;
    tc.name = table.name;
    tc.size = analytic.size();
    auto data = table.value.mutable_data();
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + opt.step;
      const double up = loss().item();
      data[i] = saved - opt.step;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      const double err = std::abs(analytic[i] - numeric) / denom;
      if (i == 0 || err > tc.max_relative_error) {
        tc.max_relative_error = err;
        tc.worst_index = i;
        tc.analytic = analytic[i];
        tc.numeric = numeric;
      }
    }
    tc.passed = tc.max_relative_error < opt.tolerance;
    report.tables.push_back(tc);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline std::string to_text(const GradcheckReport& r) {
  std::ostringstream os;
  os.precision(6);
  for (const auto& t : r.tables) {
    os << (t.passed ? "ok   " : "FAIL ") << t.name << " size=" << t.size
       << " max_rel_err=" << std::scientific << t.max_relative_error << std::defaultfloat;
    if (!t.passed) {
      os << " worst_index=" << t.worst_index << " analytic=" << t.analytic
         << " numeric=" << t.numeric;
    }
    os << "\n";
  }
  os << "tables=" << r.tables.size() << " worst=" << std::scientific << r.worst()
     << std::defaultfloat << " tolerance=" << r.tolerance << " result="
     << (r.passed() ? "pass" : "fail") << "\n";
  return os.str();
}

inline nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json j;
  j["passed"] = r.passed();
  j["tolerance"] = r.tolerance;
  j["worst"] = r.worst();
  j["seconds"] = r.seconds;
  for (const auto& t : r.tables) {
    j["tables"].push_back({{"name", t.name},
                           {"size", t.size},
                           {"max_relative_error", t.max_relative_error},
                           {"worst_index", t.worst_index},
                           {"analytic", t.analytic},
                           {"numeric", t.numeric},
                           {"passed", t.passed}});
  }
  return j;
}

}  // namespace stamp
