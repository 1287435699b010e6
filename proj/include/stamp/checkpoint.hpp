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


// Model checkpoints, little-endian:
//
//   "STMP", u32 version (1)
//   config: u32 S, T, ℓ, D, L, h, A, Q, n_classes, pe_mode, mixer,
//           aggregator; f64 λ, dropout
//   u32 table count, then per table in canonical order:
//           u16-length name, u32 rank, u32 dims[rank], f32 values

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "stamp/config.hpp"
#include "stamp/dataset.hpp"
#include "stamp/errors.hpp"
#include "stamp/model.hpp"

namespace stamp {

inline constexpr char kCheckpointMagic[4] = {'S', 'T', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t narrow_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ConfigError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const StampModel<T>& model, std::ostream& os) {
  const auto& c = model.config();
  os.write(kCheckpointMagic, 4);
  detail::put_u32(os, kCheckpointVersion);
  for (std::size_t v : {c.spatial, c.temporal, c.embed_width, c.model_width, c.blocks, c.hidden,
                        c.heads, c.queries, c.n_classes}) {
    detail::put_u32(os, detail::narrow_u32(v, "config field"));
  }
  detail::put_u32(os, static_cast<std::uint32_t>(c.pe_mode));
  detail::put_u32(os, static_cast<std::uint32_t>(c.mixer));
  detail::put_u32(os, static_cast<std::uint32_t>(c.aggregator));
  detail::put_f64(os, c.lambda_mix);
  detail::put_f64(os, c.dropout);
  const auto tables = model.params().named();
  detail::put_u32(os, detail::narrow_u32(tables.size(), "table count"));
  for (const auto& t : tables) {
    detail::put_string(os, t.name);
    detail::put_u32(os, detail::narrow_u32(t.value.rank(), "rank"));
    for (auto d : t.value.shape()) detail::put_u32(os, detail::narrow_u32(d, "dim"));
    for (T v : t.value.data()) detail::put_f32(os, static_cast<float>(v));
  }
  if (!os) throw DataError("checkpoint write failed");
}

template <typename T>
void save_checkpoint(const StampModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_checkpoint(model, os);
}

/// Reads a checkpoint; table names and shapes must match the layout its
/// config implies.
template <typename T>
StampModel<T> load_checkpoint(std::istream& is) {
  detail::ByteSource src(is);
  char magic[4];
  src.read(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError("bad magic, not a STMP checkpoint", 0);
  }
  const auto version = src.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  StampConfig c;
  for (std::size_t* f : {&c.spatial, &c.temporal, &c.embed_width, &c.model_width, &c.blocks,
                         &c.hidden, &c.heads, &c.queries, &c.n_classes}) {
    *f = src.u32("config");
  }
  const auto enum_at = src.offset();
  const auto pe = src.u32("pe_mode"), mixer = src.u32("mixer"), agg = src.u32("aggregator");
  if (pe > 3 || mixer > 2 || agg > 1) throw FormatError("invalid enum code in config", enum_at);
  c.pe_mode = static_cast<PeMode>(pe);
  c.mixer = static_cast<MixerKind>(mixer);
  c.aggregator = static_cast<AggregatorKind>(agg);
  c.lambda_mix = std::bit_cast<double>(src.u64("lambda"));
  c.dropout = std::bit_cast<double>(src.u64("dropout"));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid config: ") + e.what(), src.offset());
  }
  auto params = init_params<T>(c, 0);
  auto tables = params.named();
  const auto count_at = src.offset();
  const auto count = src.u32("table count");
  if (count != tables.size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " tables, config implies " +
                          std::to_string(tables.size()),
                      count_at);
  }
  for (auto& t : tables) {
    const auto at = src.offset();
    const auto name = src.string("table name");
    if (name != t.name) throw FormatError("expected table '" + t.name + "', found '" + name + "'", at);
    const auto rank = src.u32("rank");
    Shape shape(rank);
    for (auto& d : shape) d = src.u32("dim");
    if (shape != t.value.shape()) {
      throw FormatError("table '" + name + "' has shape " + to_string(shape) + ", expected " +
                            to_string(t.value.shape()),
                        at);
    }
    auto dst = t.value.mutable_data();
    for (auto& v : dst) v = static_cast<T>(std::bit_cast<float>(src.u32("table values")));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after last table", src.offset());
  }
  return StampModel<T>(c, std::move(params));
}

template <typename T>
StampModel<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint<T>(is);
}

}  // namespace stamp
