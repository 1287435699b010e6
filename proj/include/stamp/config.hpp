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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "stamp/errors.hpp"

namespace stamp {

/// Which positional tables are added to the reduced embeddings.
enum class PeMode : std::uint8_t { kNone = 0, kToken = 1, kSpatialTemporal = 2, kAll = 3 };
enum class MixerKind : std::uint8_t { kNone = 0, kBasicGmlp = 1, kCrissCrossGmlp = 2 };
enum class AggregatorKind : std::uint8_t { kMean = 0, kAttentionPool = 1 };

inline std::string_view to_string(PeMode m) {
  switch (m) {
    case PeMode::kNone: return "none";
    case PeMode::kToken: return "N";
    case PeMode::kSpatialTemporal: return "ST";
    case PeMode::kAll: return "NST";
  }
  return "?";
}

inline std::string_view to_string(MixerKind m) {
  switch (m) {
    case MixerKind::kNone: return "none";
    case MixerKind::kBasicGmlp: return "b_gmlp";
    case MixerKind::kCrissCrossGmlp: return "cc_gmlp";
  }
  return "?";
}

inline std::string_view to_string(AggregatorKind a) {
  switch (a) {
    case AggregatorKind::kMean: return "mean";
    case AggregatorKind::kAttentionPool: return "mhap";
  }
  return "?";
}

inline PeMode parse_pe_mode(std::string_view s) {
  if (s == "none") return PeMode::kNone;
  if (s == "N") return PeMode::kToken;
  if (s == "ST") return PeMode::kSpatialTemporal;
  if (s == "NST") return PeMode::kAll;
  throw ConfigError("unknown pe_mode '" + std::string(s) + "' (expected none, N, ST or NST)");
}

inline MixerKind parse_mixer(std::string_view s) {
  if (s == "none") return MixerKind::kNone;
  if (s == "b_gmlp") return MixerKind::kBasicGmlp;
  if (s == "cc_gmlp") return MixerKind::kCrissCrossGmlp;
  throw ConfigError("unknown mixer '" + std::string(s) + "' (expected none, b_gmlp or cc_gmlp)");
}

inline AggregatorKind parse_aggregator(std::string_view s) {
  if (s == "mean") return AggregatorKind::kMean;
  if (s == "mhap") return AggregatorKind::kAttentionPool;
  throw ConfigError("unknown aggregator '" + std::string(s) + "' (expected mean or mhap)");
}

inline bool uses_token_table(PeMode m) { return m == PeMode::kToken || m == PeMode::kAll; }
inline bool uses_axis_tables(PeMode m) {
  return m == PeMode::kSpatialTemporal || m == PeMode::kAll;
}

/// Architecture of one adapter. Grid dims (spatial, temporal, embed_width,
/// n_classes) come from the data; the rest default to the reference setup.
struct StampConfig {
  std::size_t spatial = 0;       // S, electrode channels
  std::size_t temporal = 0;      // T, one-second windows
  std::size_t embed_width = 0;   // ℓ, frozen embedding width
  std::size_t model_width = 128; // D
  std::size_t blocks = 8;        // L
  std::size_t hidden = 256;      // h, gating feedforward width
  std::size_t heads = 4;         // A
  std::size_t queries = 8;       // Q per head
  std::size_t n_classes = 2;
  PeMode pe_mode = PeMode::kAll;
  MixerKind mixer = MixerKind::kCrissCrossGmlp;
  AggregatorKind aggregator = AggregatorKind::kAttentionPool;
  double lambda_mix = 0.5;
  double dropout = 0.3;

  std::size_t tokens() const { return spatial * temporal; }
  std::size_t head_width() const { return heads ? model_width / heads : 0; }

  void validate() const {
    if (spatial == 0 || temporal == 0 || embed_width == 0) {
      throw ConfigError("grid dims S, T, ell must be positive");
    }
    if (model_width == 0) throw ConfigError("D must be positive");
    if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
    if (mixer != MixerKind::kNone) {
      if (blocks == 0) throw ConfigError("a token mixer needs L >= 1 blocks");
      if (hidden == 0 || hidden % 2 != 0) {
        throw ConfigError("h must be positive and even (gating splits it in halves), got " +
                          std::to_string(hidden));
      }
    }
    if (aggregator == AggregatorKind::kAttentionPool) {
      if (heads == 0 || queries == 0) throw ConfigError("MHAP needs A >= 1 and Q >= 1");
      if (model_width % heads != 0) {
        throw ConfigError("D=" + std::to_string(model_width) + " is not divisible by A=" +
                          std::to_string(heads));
      }
    }
    if (!(lambda_mix >= 0.0 && lambda_mix <= 1.0)) {
      throw ConfigError("lambda must lie in [0, 1]");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  bool operator==(const StampConfig&) const = default;
};

/// Closed-form count of trainable scalars for a configuration.
inline std::size_t param_count(const StampConfig& c) {
  c.validate();
  const std::size_t S = c.spatial, T = c.temporal, D = c.model_width, h = c.hidden;
  std::size_t total = c.embed_width * D;  // bias-free reduction
  if (uses_token_table(c.pe_mode)) total += S * T * D;
  if (uses_axis_tables(c.pe_mode)) total += (S + T) * D;
  std::size_t per_block = 2 * D + (D * h + h);  // norm + U
  switch (c.mixer) {
    case MixerKind::kNone:
      per_block = 0;
      break;
    case MixerKind::kCrissCrossGmlp:
      per_block += (T * T + T) + (S * S + S) + (h * D + D);
      break;
    case MixerKind::kBasicGmlp: {
      const std::size_t N = S * T;
      per_block += (N * N + N) + ((h / 2) * D + D);
      break;
    }
  }
  total += c.blocks * per_block;
  if (c.aggregator == AggregatorKind::kAttentionPool) {
    const std::size_t d = c.head_width();
    total += c.heads * ((D * d + d) + c.queries * d);
  }
  total += D * c.n_classes + c.n_classes;
  return total;
}

}  // namespace stamp
