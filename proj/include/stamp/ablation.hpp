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


// Multi-seed experiments and ablation sweeps that vary one architectural
// axis while holding the others fixed.

#pragma once

#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stamp/config.hpp"
#include "stamp/dataset.hpp"
#include "stamp/errors.hpp"
#include "stamp/metrics.hpp"
#include "stamp/train.hpp"

namespace stamp {

struct Experiment {
  std::vector<RunResult> runs;
  AggregateReport aggregate;
};

using RunCallback = std::function<void(std::uint64_t seed, const EpochRecord&)>;

/// One training run per seed plus the mean/std aggregate of test reports.
/// Throws DivergenceError if any run diverged.
template <typename T>
Experiment run_experiment(const StampConfig& config, const Dataset& data,
                          const SplitManifest& manifest, const TrainOptions& opt,
                          const std::vector<std::uint64_t>& seeds,
                          const RunCallback& on_epoch = {}) {
  if (seeds.empty()) throw UsageError("at least one seed is required");
  Experiment e;
  for (auto seed : seeds) {
    std::function<void(const EpochRecord&)> cb;
    if (on_epoch) cb = [&, seed](const EpochRecord& r) { on_epoch(seed, r); };
    e.runs.push_back(run_seed<T>(config, data, manifest, opt, seed, cb));
    if (e.runs.back().training.diverged) {
      throw DivergenceError("seed " + std::to_string(seed) + ": " + e.runs.back().training.divergence);
    }
  }
  e.aggregate = aggregate_seeds(test_reports(e.runs));
  return e;
}

enum class AblationAxis { kPositional, kMixer, kAggregator, kWidth };

inline AblationAxis parse_ablation_axis(std::string_view s) {
  if (s == "pe") return AblationAxis::kPositional;
  if (s == "mixer") return AblationAxis::kMixer;
  if (s == "aggregator") return AblationAxis::kAggregator;
  if (s == "D" || s == "width") return AblationAxis::kWidth;
  throw UsageError("unknown ablation axis '" + std::string(s) +
                   "' (expected pe, mixer, aggregator or D)");
}

inline std::string_view to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::kPositional: return "pe";
    case AblationAxis::kMixer: return "mixer";
    case AblationAxis::kAggregator: return "aggregator";
    case AblationAxis::kWidth: return "D";
  }
  return "?";
}

struct Variant {
  std::string label;
  StampConfig config;
};

/// The variant set for one axis, each a copy of `base` with that axis set.
inline std::vector<Variant> ablation_variants(const StampConfig& base, AblationAxis axis) {
  std::vector<Variant> out;
  auto add = [&](std::string label, auto&& edit) {
    StampConfig c = base;
    edit(c);
    out.push_back({std::move(label), c});
  };
  switch (axis) {
    case AblationAxis::kPositional:
      for (auto m : {PeMode::kNone, PeMode::kToken, PeMode::kSpatialTemporal, PeMode::kAll}) {
        add("pe=" + std::string(to_string(m)), [m](StampConfig& c) { c.pe_mode = m; });
      }
      break;
    case AblationAxis::kMixer:
      for (auto m : {MixerKind::kBasicGmlp, MixerKind::kCrissCrossGmlp}) {
        add("mixer=" + std::string(to_string(m)), [m](StampConfig& c) { c.mixer = m; });
      }
      break;
    case AblationAxis::kAggregator:
      for (auto a : {AggregatorKind::kMean, AggregatorKind::kAttentionPool}) {
        add("aggregator=" + std::string(to_string(a)), [a](StampConfig& c) { c.aggregator = a; });
      }
      break;
    case AblationAxis::kWidth:
      for (std::size_t d : {8, 16, 32, 64, 128}) {
        add("D=" + std::to_string(d), [d](StampConfig& c) { c.model_width = d; });
      }
      break;
  }
  return out;
}

struct AblationRow {
  std::string label;
  StampConfig config;
  std::size_t params = 0;
  AggregateReport aggregate;
};

struct AblationTable {
  std::string axis;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
};

template <typename T>
AblationTable run_variants(const std::vector<Variant>& variants, const Dataset& data,
                           const SplitManifest& manifest, const TrainOptions& opt,
                           const std::vector<std::uint64_t>& seeds, std::string axis_name,
                           const std::function<void(const AblationRow&)>& on_row = {}) {
  AblationTable table;
  table.axis = std::move(axis_name);
  table.seeds = seeds;
  for (const auto& v : variants) {
    AblationRow row;
    row.label = v.label;
    row.config = v.config;
    row.params = param_count(v.config);
    row.aggregate = run_experiment<T>(v.config, data, manifest, opt, seeds).aggregate;
    table.rows.push_back(row);
    if (on_row) on_row(row);
  }
  return table;
}

template <typename T>
AblationTable run_ablation(const StampConfig& base, AblationAxis axis, const Dataset& data,
                           const SplitManifest& manifest, const TrainOptions& opt,
                           const std::vector<std::uint64_t>& seeds = kAblationSeeds,
                           const std::function<void(const AblationRow&)>& on_row = {}) {
  return run_variants<T>(ablation_variants(base, axis), data, manifest, opt, seeds,
                         std::string(to_string(axis)), on_row);
}

inline std::string to_text(const AblationTable& t) {
  std::ostringstream os;
  std::size_t width = 7;
  for (const auto& r : t.rows) width = std::max(width, r.label.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "variant" << std::right
     << std::setw(10) << "params";
  if (!t.rows.empty()) {
    for (const auto& [name, s] : t.rows.front().aggregate.metrics) {
      os << "  " << std::setw(24) << name;
    }
  }
  os << "\n" << std::fixed << std::setprecision(4);
  for (const auto& r : t.rows) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << r.label << std::right
       << std::setw(10) << r.params;
    for (const auto& [name, s] : r.aggregate.metrics) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << s.mean << " ± " << s.stddev;
      os << "  " << std::setw(25) << cell.str();  // '±' is two bytes
    }
    os << "\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const AblationTable& t) {
  nlohmann::json j;
  j["axis"] = t.axis;
  j["seeds"] = t.seeds;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : t.rows) {
    j["rows"].push_back({{"variant", r.label}, {"params", r.params}, {"report", to_json(r.aggregate)}});
  }
  return j;
}

}  // namespace stamp
