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

// Classification metrics and seed-level aggregation.
//
// Binary tasks report balanced accuracy (threshold p1 >= 0.5), AUROC and
// AUC-PR; multiclass tasks report balanced accuracy (argmax), Cohen's kappa
// and support-weighted F1. AUROC is the binary monitor, kappa the
// multiclass one.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stamp/errors.hpp"

namespace stamp {

using Labels = std::span<const std::uint32_t>;
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

namespace detail {

inline std::size_t infer_classes(Labels a, Labels b) {
  std::uint32_t mx = 0;
  for (auto v : a) mx = std::max(mx, v);
  for (auto v : b) mx = std::max(mx, v);
  return static_cast<std::size_t>(mx) + 1;
}

inline void require_paired(std::size_t n_true, std::size_t n_other, const char* metric) {
  if (n_true == 0) throw DataError(std::string(metric) + ": empty input");
  if (n_true != n_other) {
    throw DataError(std::string(metric) + ": " + std::to_string(n_true) + " labels vs " +
                    std::to_string(n_other) + " predictions");
  }
}

inline void require_both_classes(Labels y_true, const char* metric) {
  bool pos = false, neg = false;
  for (auto y : y_true) {
    if (y > 1) throw DataError(std::string(metric) + ": labels must be 0/1");
    (y ? pos : neg) = true;
  }
  if (!pos || !neg) {
    throw DataError(std::string(metric) + " is undefined when only one class is present");
  }
}

}  // namespace detail

/// Rows are true classes, columns predicted classes.
inline ConfusionMatrix confusion_matrix(Labels y_true, Labels y_pred, std::size_t n_classes = 0) {
  detail::require_paired(y_true.size(), y_pred.size(), "confusion_matrix");
  if (n_classes == 0) n_classes = detail::infer_classes(y_true, y_pred);
  ConfusionMatrix m(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= n_classes || y_pred[i] >= n_classes) {
      throw DataError("confusion_matrix: label outside [0, " + std::to_string(n_classes) + ")");
    }
    ++m[y_true[i]][y_pred[i]];
  }
  return m;
}

/// Unweighted mean of per-class recall over classes present in y_true.
inline double balanced_accuracy(Labels y_true, Labels y_pred) {
  const auto m = confusion_matrix(y_true, y_pred);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    const std::size_t support = std::accumulate(m[c].begin(), m[c].end(), std::size_t{0});
    if (support == 0) continue;
    total += static_cast<double>(m[c][c]) / static_cast<double>(support);
    ++present;
  }
  return total / static_cast<double>(present);
}

/// Mann-Whitney AUROC via midranks (ties count one half).
inline double auroc(Labels y_true, std::span<const double> scores) {
  detail::require_paired(y_true.size(), scores.size(), "auroc");
  detail::require_both_classes(y_true, "auroc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (y_true[order[k]]) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double q = static_cast<double>(n - positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over descending distinct-score
/// thresholds.
inline double auc_pr(Labels y_true, std::span<const double> scores) {
  detail::require_paired(y_true.size(), scores.size(), "auc_pr");
  detail::require_both_classes(y_true, "auc_pr");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  const double positives = static_cast<double>(std::count(y_true.begin(), y_true.end(), 1u));
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (y_true[order[j]] ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// (p_o − p_e) / (1 − p_e). When p_e == 1 (both raters constant on the same
/// class) kappa is defined as 0 and `degenerate` is set.
inline double cohens_kappa(Labels y_true, Labels y_pred, bool* degenerate = nullptr) {
  const auto m = confusion_matrix(y_true, y_pred);
  const double n = static_cast<double>(y_true.size());
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    observed += static_cast<double>(m[c][c]);
    double row = 0.0, col = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      row += static_cast<double>(m[c][k]);
      col += static_cast<double>(m[k][c]);
    }
    expected += row * col;
  }
  observed /= n;
  expected /= n * n;
  if (degenerate) *degenerate = false;
  if (expected >= 1.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return (observed - expected) / (1.0 - expected);
}

/// Support-weighted mean of per-class F1; a class with no true positives
/// contributes 0.
inline double weighted_f1(Labels y_true, Labels y_pred) {
  const auto m = confusion_matrix(y_true, y_pred);
  double total = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    double support = 0.0, predicted = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      support += static_cast<double>(m[c][k]);
      predicted += static_cast<double>(m[k][c]);
    }
    const double tp = static_cast<double>(m[c][c]);
    const double f1 = tp == 0.0 ? 0.0 : 2.0 * tp / (support + predicted);
    total += support * f1;
  }
  return total / static_cast<double>(y_true.size());
}

// ---------------------------------------------------------------------------
// Reports

enum class TaskKind { kBinary, kMulticlass };

inline std::string_view to_string(TaskKind k) {
  return k == TaskKind::kBinary ? "binary" : "multiclass";
}

struct EvalReport {
  TaskKind task = TaskKind::kBinary;
  std::size_t n_samples = 0;
  double balanced_accuracy = 0.0;
  std::optional<double> auroc;        // binary only; empty when undefined
  std::optional<double> auc_pr;       // binary only
  std::optional<double> cohens_kappa; // multiclass only
  std::optional<double> weighted_f1;  // multiclass only
  ConfusionMatrix confusion;

  /// Named metrics in a stable order.
  std::vector<std::pair<std::string, double>> metrics() const {
    std::vector<std::pair<std::string, double>> out{{"balanced_accuracy", balanced_accuracy}};
    if (auroc) out.emplace_back("auroc", *auroc);
    if (auc_pr) out.emplace_back("auc_pr", *auc_pr);
    if (cohens_kappa) out.emplace_back("cohens_kappa", *cohens_kappa);
    if (weighted_f1) out.emplace_back("weighted_f1", *weighted_f1);
    return out;
  }

  /// AUROC (binary) or kappa (multiclass); balanced accuracy when the
  /// preferred metric is undefined.
  double monitor() const {
    if (task == TaskKind::kBinary) return auroc.value_or(balanced_accuracy);
    return cohens_kappa.value_or(balanced_accuracy);
  }
  std::string monitor_name() const {
    if (task == TaskKind::kBinary) return auroc ? "auroc" : "balanced_accuracy";
    return cohens_kappa ? "cohens_kappa" : "balanced_accuracy";
  }
};

/// Builds a report from class probabilities laid out row-major [N, n_classes].
inline EvalReport evaluate_predictions(Labels y_true, std::span<const double> probs,
                                       std::size_t n_classes) {
  if (y_true.empty()) throw DataError("evaluate: empty input");
  if (n_classes < 2 || probs.size() != y_true.size() * n_classes) {
    throw DataError("evaluate: probability matrix does not match labels");
  }
  EvalReport r;
  r.task = n_classes == 2 ? TaskKind::kBinary : TaskKind::kMulticlass;
  r.n_samples = y_true.size();
  std::vector<std::uint32_t> pred(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const auto row = probs.subspan(i * n_classes, n_classes);
    if (r.task == TaskKind::kBinary) {
      pred[i] = row[1] >= 0.5 ? 1u : 0u;
    } else {
      pred[i] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  r.confusion = confusion_matrix(y_true, pred, n_classes);
  r.balanced_accuracy = balanced_accuracy(y_true, pred);
  if (r.task == TaskKind::kBinary) {
    std::vector<double> scores(y_true.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = probs[i * 2 + 1];
    const bool both = std::count(y_true.begin(), y_true.end(), 1u) > 0 &&
                      std::count(y_true.begin(), y_true.end(), 0u) > 0;
    if (both) {
      r.auroc = auroc(y_true, scores);
      r.auc_pr = auc_pr(y_true, scores);
    }
  } else {
    r.cohens_kappa = cohens_kappa(y_true, pred);
    r.weighted_f1 = weighted_f1(y_true, pred);
  }
  return r;
}

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct AggregateReport {
  TaskKind task = TaskKind::kBinary;
  std::size_t n_runs = 0;
  std::vector<std::pair<std::string, MetricSummary>> metrics;

  const MetricSummary& at(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
      if (k == name) return v;
    }
    throw UsageError("aggregate report has no metric '" + name + "'");
  }
  bool operator==(const AggregateReport& o) const {
    if (task != o.task || n_runs != o.n_runs || metrics.size() != o.metrics.size()) return false;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (metrics[i].first != o.metrics[i].first || metrics[i].second.mean != o.metrics[i].second.mean ||
          metrics[i].second.stddev != o.metrics[i].second.stddev) {
        return false;
      }
    }
    return true;
  }
};

/// Sample mean and (n−1)-denominator standard deviation per metric.
inline AggregateReport aggregate_seeds(std::span<const EvalReport> reports) {
  if (reports.empty()) throw UsageError("aggregate_seeds: no reports");
  AggregateReport agg;
  agg.task = reports[0].task;
  agg.n_runs = reports.size();
  std::map<std::string, std::vector<double>> columns;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    if (r.task != agg.task) throw UsageError("aggregate_seeds: mixed binary and multiclass reports");
    for (const auto& [name, value] : r.metrics()) {
      if (!columns.count(name)) order.push_back(name);
      columns[name].push_back(value);
    }
  }
  for (const auto& name : order) {
    const auto& v = columns[name];
    MetricSummary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    agg.metrics.emplace_back(name, s);
  }
  return agg;
}

// ---------------------------------------------------------------------------
// Serialization: a key=value text form plus a JSON mirror.

namespace detail {
inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace detail

inline std::string to_text(const EvalReport& r) {
  std::ostringstream os;
  os << "task=" << to_string(r.task) << "\n";
  os << "n_samples=" << r.n_samples << "\n";
  for (const auto& [name, value] : r.metrics()) os << name << "=" << detail::format_double(value) << "\n";
  os << "monitor=" << r.monitor_name() << "\n";
  os << "confusion=";
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    if (i) os << ";";
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) os << (j ? "," : "") << r.confusion[i][j];
  }
  os << "\n";
  return os.str();
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = to_string(r.task);
  j["n_samples"] = r.n_samples;
  for (const auto& [name, value] : r.metrics()) j["metrics"][name] = value;
  j["monitor"] = r.monitor_name();
  j["confusion"] = r.confusion;
  return j;
}

inline std::string to_text(const AggregateReport& a) {
  std::ostringstream os;
  os << "task=" << to_string(a.task) << "\n";
  os << "n_runs=" << a.n_runs << "\n";
  for (const auto& [name, s] : a.metrics) {
    os << name << ".mean=" << detail::format_double(s.mean) << "\n";
    os << name << ".std=" << detail::format_double(s.stddev) << "\n";
  }
  return os.str();
}

inline nlohmann::json to_json(const AggregateReport& a) {
  nlohmann::json j;
  j["task"] = to_string(a.task);
  j["n_runs"] = a.n_runs;
  for (const auto& [name, s] : a.metrics) j["metrics"][name] = {{"mean", s.mean}, {"std", s.stddev}};
  return j;
}

}  // namespace stamp
