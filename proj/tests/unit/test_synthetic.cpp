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


#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "stamp/synthetic.hpp"
#include "support/linear_probe.hpp"

namespace stamp {
namespace {

std::vector<double> pooled(const GridSample& s, const GridDims& d) {
  std::vector<double> f(d.embed_width, 0.0);
  const std::size_t cells = std::size_t{d.spatial} * d.temporal;
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < d.embed_width; ++k) f[k] += s.values[c * d.embed_width + k] / cells;
  }
  return f;
}

void pooled_split(const SyntheticDataset& sd, const std::vector<std::string>& ids,
                  std::vector<std::vector<double>>& x, std::vector<std::uint32_t>& y) {
  x.clear();
  y.clear();
  for (const auto& s : select(sd.data, ids)) {
    x.push_back(pooled(s, sd.data.dims));
    y.push_back(s.label);
  }
}

double probe_accuracy(const SyntheticDataset& sd) {
  std::vector<std::vector<double>> xtr, xte;
  std::vector<std::uint32_t> ytr, yte;
  pooled_split(sd, sd.manifest.train, xtr, ytr);
  pooled_split(sd, sd.manifest.test, xte, yte);
  return testing::fit_linear_probe(xtr, ytr, sd.data.dims.n_classes).accuracy(xte, yte);
}

TEST(Interaction, NoiselessOracleAtKnownCellsIsPerfect) {
  SyntheticOptions o;
  o.noise = 0.0;
  o.distractors = false;
  o.n_samples = 400;
  o.seed = 3;
  const auto sd = generate_interaction_dataset(o);
  const std::size_t w = o.embed_width;
  for (const auto& s : sd.data.samples) {
    std::size_t best = 0;
    double best_dist = 1e300;
    for (std::size_t c = 0; c < o.n_classes; ++c) {
      double dist = 0;
      for (std::size_t k = 0; k < w; ++k) {
        const double diff = s.values[sd.class_cells[c] * w + k] - sd.signatures[c][k];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    ASSERT_EQ(best, s.label) << s.id;
  }
}

TEST(Interaction, EverySampleCarriesEachSignatureOnce) {
  SyntheticOptions o;
  o.noise = 0.0;
  o.n_samples = 40;
  const auto sd = generate_interaction_dataset(o);
  std::vector<double> total(o.embed_width, 0.0);
  for (const auto& sig : sd.signatures) {
    for (std::size_t k = 0; k < o.embed_width; ++k) total[k] += sig[k];
  }
  const std::size_t cells = std::size_t{o.spatial} * o.temporal;
  for (const auto& s : sd.data.samples) {
    const auto f = pooled(s, sd.data.dims);
    for (std::size_t k = 0; k < o.embed_width; ++k) EXPECT_NEAR(f[k] * cells, total[k], 1e-4);
  }
}

// The two probe tests share a noise level so they form a matched pair.
constexpr double kProbeNoise = 0.5;

TEST(Interaction, PooledFeaturesAreNearChanceForALinearProbe) {
  SyntheticOptions o;
  o.seed = 11;
  o.noise = kProbeNoise;
  const double acc = probe_accuracy(generate_interaction_dataset(o));
  EXPECT_LT(acc, 1.0 / o.n_classes + 0.1);
}

TEST(Interaction, PooledFeaturesAreInformativeWithoutDistractors) {
  SyntheticOptions o;
  o.seed = 11;
  o.noise = kProbeNoise;
  o.distractors = false;
  EXPECT_GT(probe_accuracy(generate_interaction_dataset(o)), 1.0 / o.n_classes + 0.3);
}

TEST(Interaction, SameSeedSameBytesDifferentSeedDifferentBytes) {
  SyntheticOptions o;
  o.n_samples = 50;
  o.seed = 5;
  const auto a = serialize_dataset(generate_interaction_dataset(o).data);
  EXPECT_EQ(a, serialize_dataset(generate_interaction_dataset(o).data));
  o.seed = 6;
  EXPECT_NE(a, serialize_dataset(generate_interaction_dataset(o).data));
}

TEST(Interaction, ClassCellsAreDistinctAndLabelsBalanced) {
  SyntheticOptions o;
  o.n_samples = 100;
  const auto sd = generate_interaction_dataset(o);
  EXPECT_EQ(std::set<std::size_t>(sd.class_cells.begin(), sd.class_cells.end()).size(), 4u);
  std::vector<int> counts(4, 0);
  for (const auto& s : sd.data.samples) ++counts[s.label];
  EXPECT_EQ(counts, (std::vector<int>{25, 25, 25, 25}));
}

TEST(Interaction, GridTooSmallIsRejected) {
  SyntheticOptions o;
  o.spatial = 2;
  o.temporal = 3;
  o.n_classes = 4;
  EXPECT_THROW(generate_interaction_dataset(o), ConfigError);
  o.distractors = false;
  EXPECT_NO_THROW(generate_interaction_dataset(o));
}

TEST(Split, PartitionsAllIdsSeventyFifteenFifteen) {
  SyntheticOptions o;
  o.n_samples = 2000;
  const auto sd = generate_interaction_dataset(o);
  EXPECT_EQ(sd.manifest.train.size(), 1400u);
  EXPECT_EQ(sd.manifest.validation.size(), 300u);
  EXPECT_EQ(sd.manifest.test.size(), 300u);
  EXPECT_NO_THROW(sd.manifest.validate(&sd.data));
}

TEST(Separable, NoiselessProbeIsPerfect) {
  SyntheticOptions o;
  o.noise = 0.0;
  o.n_samples = 400;
  EXPECT_DOUBLE_EQ(probe_accuracy(generate_separable_dataset(o)), 1.0);
}

TEST(Separable, AccuracyDegradesMonotonicallyWithNoise) {
  SyntheticOptions o;
  o.n_samples = 1000;
  o.amplitude = 0.1;
  std::vector<double> acc;
  for (double sigma : {0.5, 1.5, 4.0}) {
    o.noise = sigma;
    acc.push_back(probe_accuracy(generate_separable_dataset(o)));
  }
  EXPECT_GT(acc[0], acc[1]);
  EXPECT_GT(acc[1], acc[2]);
}

TEST(Separable, SeedDeterminism) {
  SyntheticOptions o;
  o.n_samples = 30;
  EXPECT_EQ(serialize_dataset(generate_separable_dataset(o).data),
            serialize_dataset(generate_separable_dataset(o).data));
}

}  // namespace
}  // namespace stamp
