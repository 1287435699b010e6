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

// Brute-force metric definitions used as oracles: all-pairs AUROC,
// exhaustive-threshold average precision, and direct per-class counting.

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

namespace stamp::testing {

inline double oracle_balanced_accuracy(const std::vector<std::uint32_t>& y,
                                       const std::vector<std::uint32_t>& p, std::size_t k) {
  double total = 0;
  std::size_t present = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    std::size_t support = 0, hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] != c) continue;
      ++support;
      if (p[i] == c) ++hit;
    }
    if (support) {
      total += static_cast<double>(hit) / support;
      ++present;
    }
  }
  return total / present;
}

inline double oracle_auroc(const std::vector<std::uint32_t>& y, const std::vector<double>& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline double oracle_average_precision(const std::vector<std::uint32_t>& y,
                                       const std::vector<double>& s) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double positives = 0;
  for (auto v : y) positives += v;
  double prev_recall = 0, ap = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp) += 1;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
  }
  return ap;
}

inline double oracle_kappa(const std::vector<std::uint32_t>& y, const std::vector<std::uint32_t>& p,
                           std::size_t k) {
  const double n = static_cast<double>(y.size());
  double agree = 0;
  for (std::size_t i = 0; i < y.size(); ++i) agree += y[i] == p[i];
  double chance = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    double a = 0, b = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      a += y[i] == c;
      b += p[i] == c;
    }
    chance += (a / n) * (b / n);
  }
  if (chance >= 1.0) return 0.0;
  return (agree / n - chance) / (1 - chance);
}

inline double oracle_weighted_f1(const std::vector<std::uint32_t>& y,
                                 const std::vector<std::uint32_t>& p, std::size_t k) {
  double total = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (p[i] == c && y[i] == c) tp += 1;
      else if (p[i] == c) fp += 1;
      else if (y[i] == c) fn += 1;
    }
    double f1 = 0;
    if (tp > 0) {
      const double precision = tp / (tp + fp), recall = tp / (tp + fn);
      f1 = 2 * precision * recall / (precision + recall);
    }
    total += (tp + fn) * f1;
  }
  return total / static_cast<double>(y.size());
}

}  // namespace stamp::testing
