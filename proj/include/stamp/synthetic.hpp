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


// Synthetic embedding-grid benchmarks.
//
// Interaction data: class c owns a grid cell and a signature vector v_c. A
// sample of class c carries v_c at its class cell; with distractors on, the
// signatures of every other class sit at random cells outside the class-cell
// set. Every sample then contains each signature exactly once, so any
// position-blind pooled feature carries no class information.
//
// Separable data: a per-class mean vector is added to every cell, so the
// class survives mean pooling.

#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stamp/dataset.hpp"
#include "stamp/errors.hpp"
#include "stamp/random.hpp"

namespace stamp {

struct SyntheticOptions {
  std::uint32_t spatial = 8;
  std::uint32_t temporal = 4;
  std::uint32_t embed_width = 32;
  std::uint32_t n_classes = 4;
  std::size_t n_samples = 2000;
  double noise = 1.0;       // σ of the i.i.d. Gaussian added to every value
  double amplitude = 1.0;   // scale of signatures / class means
  bool distractors = true;  // interaction data only
  std::uint64_t seed = 0;
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
};

struct SyntheticDataset {
  Dataset data;
  SplitManifest manifest;
  std::vector<std::size_t> class_cells;        // interaction: flat s·T + t per class
  std::vector<std::vector<float>> signatures;  // per class, ℓ values
};

namespace detail {

inline void check_synthetic(const SyntheticOptions& o) {
  if (o.spatial == 0 || o.temporal == 0 || o.embed_width == 0) {
    throw ConfigError("synthetic grid dims must be positive");
  }
  if (o.n_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (o.n_samples == 0) throw ConfigError("synthetic data needs at least one sample");
  if (!(o.noise >= 0.0)) throw ConfigError("noise must be non-negative");
  if (!(o.train_fraction > 0.0 && o.validation_fraction >= 0.0 &&
        o.train_fraction + o.validation_fraction <= 1.0)) {
    throw ConfigError("split fractions must be positive and sum to at most 1");
  }
}

/// Seeded 70/15/15-style split over sample ids.
inline SplitManifest random_split(std::size_t n, const SyntheticOptions& o) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng(derive_key({o.seed, 0x5911})).shuffle(order);
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * o.train_fraction);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * o.validation_fraction);
  SplitManifest m;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? m.train : (i < n_train + n_val ? m.validation : m.test);
    dst.push_back(std::to_string(order[i]));
  }
  return m;
}

inline std::vector<std::vector<float>> draw_vectors(std::size_t count, std::size_t width,
                                                    double amplitude, CounterRng& rng) {
  std::vector<std::vector<float>> out(count, std::vector<float>(width));
  for (auto& v : out) {
    for (auto& x : v) x = static_cast<float>(amplitude * rng.normal());
  }
  return out;
}

inline Dataset empty_dataset(const SyntheticOptions& o) {
  Dataset ds;
  ds.dims = {o.spatial, o.temporal, o.embed_width, o.n_classes};
  ds.samples.resize(o.n_samples);
  return ds;
}

}  // namespace detail

inline SyntheticDataset generate_interaction_dataset(const SyntheticOptions& o) {
  detail::check_synthetic(o);
  const std::size_t cells = std::size_t{o.spatial} * o.temporal;
  const std::size_t needed = o.distractors ? 2 * std::size_t{o.n_classes} - 1 : o.n_classes;
  if (needed > cells) {
    throw ConfigError("interaction data needs " + std::to_string(needed) + " cells, grid has " +
                      std::to_string(cells));
  }
  CounterRng rng(derive_key({o.seed, 0x1a7e}));
  std::vector<std::size_t> all(cells);
  std::iota(all.begin(), all.end(), std::size_t{0});
  rng.shuffle(all);
  SyntheticDataset out;
  out.class_cells.assign(all.begin(), all.begin() + o.n_classes);
  const std::vector<std::size_t> free_cells(all.begin() + o.n_classes, all.end());
  out.signatures = detail::draw_vectors(o.n_classes, o.embed_width, o.amplitude, rng);

  out.data = detail::empty_dataset(o);
  const std::size_t width = o.embed_width;
  for (std::size_t i = 0; i < o.n_samples; ++i) {
    CounterRng srng(derive_key({o.seed, 0x1a7f, i}));
    auto& s = out.data.samples[i];
    s.id = std::to_string(i);
    s.label = static_cast<std::uint32_t>(i % o.n_classes);
    s.values.resize(cells * width);
    for (auto& v : s.values) v = static_cast<float>(o.noise * srng.normal());
    auto place = [&](std::size_t cell, const std::vector<float>& sig) {
      for (std::size_t k = 0; k < width; ++k) s.values[cell * width + k] += sig[k];
    };
    place(out.class_cells[s.label], out.signatures[s.label]);
    if (o.distractors) {
      std::vector<std::size_t> spots = free_cells;
      srng.shuffle(spots);
      std::size_t next = 0;
      for (std::uint32_t c = 0; c < o.n_classes; ++c) {
        if (c != s.label) place(spots[next++], out.signatures[c]);
      }
    }
  }
  out.manifest = detail::random_split(o.n_samples, o);
  return out;
}

inline SyntheticDataset generate_separable_dataset(const SyntheticOptions& o) {
  detail::check_synthetic(o);
  CounterRng rng(derive_key({o.seed, 0x5e9a}));
  SyntheticDataset out;
  out.signatures = detail::draw_vectors(o.n_classes, o.embed_width, o.amplitude, rng);
  out.data = detail::empty_dataset(o);
  const std::size_t cells = std::size_t{o.spatial} * o.temporal, width = o.embed_width;
  for (std::size_t i = 0; i < o.n_samples; ++i) {
    CounterRng srng(derive_key({o.seed, 0x5e9b, i}));
    auto& s = out.data.samples[i];
    s.id = std::to_string(i);
    s.label = static_cast<std::uint32_t>(i % o.n_classes);
    s.values.resize(cells * width);
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t k = 0; k < width; ++k) {
        s.values[c * width + k] =
            static_cast<float>(out.signatures[s.label][k] + o.noise * srng.normal());
      }
    }
  }
  out.manifest = detail::random_split(o.n_samples, o);
  return out;
}

}  // namespace stamp
