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


// STEB: a little-endian container for labeled S x T x ℓ embedding grids.
//
//   offset  size  field
//   0       4     magic "STEB"
//   4       4     u32 version (1)
//   8       8     u64 n_samples
//   16      16    u32 S, T, ℓ, n_classes
//   32      4     u32 dtype (1 = f32)
//   36      4     u32 flags (bit 0: axis names, bit 1: sample ids)
//   40      ...   [bit 0] S then T strings; [bit 1] n_samples strings
//                 (each string: u16 byte length + UTF-8 bytes)
//   ...           n_samples x (S·T·ℓ f32 values, u32 label)
//
// Samples without stored ids are named by their decimal index.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "stamp/errors.hpp"
#include "stamp/tensor.hpp"

namespace stamp {

inline constexpr char kStebMagic[4] = {'S', 'T', 'E', 'B'};
inline constexpr std::uint32_t kStebVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;
inline constexpr std::uint32_t kFlagAxisNames = 1u << 0;
inline constexpr std::uint32_t kFlagSampleIds = 1u << 1;
inline constexpr std::size_t kStebFixedHeader = 40;

struct GridDims {
  std::uint32_t spatial = 0;
  std::uint32_t temporal = 0;
  std::uint32_t embed_width = 0;
  std::uint32_t n_classes = 0;

  std::size_t values_per_sample() const {
    return std::size_t{spatial} * temporal * embed_width;
  }
  std::size_t bytes_per_sample() const { return values_per_sample() * 4 + 4; }
  bool operator==(const GridDims&) const = default;
};

struct GridSample {
  std::string id;
  std::uint32_t label = 0;
  std::vector<float> values;  // S·T·ℓ, row-major [s][t][k]

  bool operator==(const GridSample&) const = default;
};

struct Dataset {
  GridDims dims;
  std::vector<std::string> spatial_names;   // empty or S entries
  std::vector<std::string> temporal_names;  // empty or T entries
  std::vector<GridSample> samples;

  bool operator==(const Dataset&) const = default;
};

struct StebHeader {
  std::uint32_t version = kStebVersion;
  std::uint64_t n_samples = 0;
  GridDims dims;
  std::uint32_t dtype = kDtypeF32;
  std::uint32_t flags = 0;
  std::vector<std::string> spatial_names, temporal_names, sample_ids;
  std::uint64_t header_bytes = kStebFixedHeader;

  std::uint64_t payload_bytes() const { return n_samples * dims.bytes_per_sample(); }
  std::uint64_t total_bytes() const { return header_bytes + payload_bytes(); }
};

namespace detail {

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline void put_string(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff) throw DataError("string longer than 65535 bytes: " + s.substr(0, 32));
  put_u16(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Byte reader that tracks its offset for diagnostics.
class ByteSource {
 public:
  explicit ByteSource(std::istream& is) : is_(is) {}

  void read(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw FormatError("truncated while reading " + std::string(what) + ": wanted " +
                            std::to_string(n) + " bytes, got " + std::to_string(got),
                        offset_ + got);
    }
    offset_ += n;
  }
  std::uint16_t u16(const char* what) {
    unsigned char b[2];
    read(b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    read(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::string string(const char* what) {
    const std::uint16_t n = u16(what);
    std::string s(n, '\0');
    if (n) read(s.data(), n, what);
    return s;
  }
  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

/// Remaining bytes in a seekable stream, or nullopt.
inline std::optional<std::uint64_t> remaining(std::istream& is) {
  const auto here = is.tellg();
  if (here < 0) return std::nullopt;
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  if (end < 0) return std::nullopt;
  return static_cast<std::uint64_t>(end - here);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Writing

inline void write_dataset(const Dataset& ds, std::ostream& os) {
  const auto& d = ds.dims;
  if (d.spatial == 0 || d.temporal == 0 || d.embed_width == 0 || d.n_classes == 0) {
    throw DataError("dataset dims must be positive");
  }
  const bool names = !ds.spatial_names.empty() || !ds.temporal_names.empty();
  if (names && (ds.spatial_names.size() != d.spatial || ds.temporal_names.size() != d.temporal)) {
    throw DataError("axis names must list all S spatial and T temporal entries");
  }
  bool ids = false;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ds.samples[i].id != std::to_string(i)) ids = true;
  }
  os.write(kStebMagic, 4);
  detail::put_u32(os, kStebVersion);
  detail::put_u64(os, ds.samples.size());
  detail::put_u32(os, d.spatial);
  detail::put_u32(os, d.temporal);
  detail::put_u32(os, d.embed_width);
  detail::put_u32(os, d.n_classes);
  detail::put_u32(os, kDtypeF32);
  detail::put_u32(os, (names ? kFlagAxisNames : 0u) | (ids ? kFlagSampleIds : 0u));
  if (names) {
    for (const auto& s : ds.spatial_names) detail::put_string(os, s);
    for (const auto& s : ds.temporal_names) detail::put_string(os, s);
  }
  if (ids) {
    for (const auto& s : ds.samples) detail::put_string(os, s.id);
  }
  const std::size_t per = d.values_per_sample();
  for (const auto& s : ds.samples) {
    if (s.values.size() != per) {
      throw DataError("sample '" + s.id + "' has " + std::to_string(s.values.size()) +
                      " values, expected " + std::to_string(per));
    }
    if (s.label >= d.n_classes) {
      throw DataError("sample '" + s.id + "' label " + std::to_string(s.label) +
                      " outside [0, " + std::to_string(d.n_classes) + ")");
    }
    for (float v : s.values) detail::put_f32(os, v);
    detail::put_u32(os, s.label);
  }
  if (!os) throw DataError("write failed");
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_dataset(ds, os);
}

inline std::string serialize_dataset(const Dataset& ds) {
  std::ostringstream os(std::ios::binary);
  write_dataset(ds, os);
  return std::move(os).str();
}

// ---------------------------------------------------------------------------
// Reading

/// Streaming reader: parses the header on construction and yields one
/// sample per next() call.
class StebReader {
 public:
  explicit StebReader(std::istream& is) : src_(is) {
    const auto available = detail::remaining(is);
    char magic[4];
    src_.read(magic, 4, "magic");
    if (std::memcmp(magic, kStebMagic, 4) != 0) throw FormatError("bad magic, not a STEB file", 0);
    header_.version = src_.u32("version");
    if (header_.version != kStebVersion) {
      throw FormatError("unsupported STEB version " + std::to_string(header_.version), 4);
    }
    header_.n_samples = src_.u64("n_samples");
    header_.dims.spatial = src_.u32("S");
    header_.dims.temporal = src_.u32("T");
    header_.dims.embed_width = src_.u32("embed width");
    header_.dims.n_classes = src_.u32("n_classes");
    const auto& d = header_.dims;
    if (d.spatial == 0 || d.temporal == 0 || d.embed_width == 0 || d.n_classes == 0) {
      throw FormatError("header declares a zero dimension", 16);
    }
    header_.dtype = src_.u32("dtype");
    if (header_.dtype != kDtypeF32) {
      throw FormatError("unsupported dtype code " + std::to_string(header_.dtype), 32);
    }
    header_.flags = src_.u32("flags");
    if (header_.flags & ~(kFlagAxisNames | kFlagSampleIds)) {
      throw FormatError("unknown flag bits", 36);
    }
    if (header_.flags & kFlagAxisNames) {
      for (std::uint32_t i = 0; i < d.spatial; ++i) header_.spatial_names.push_back(src_.string("axis name"));
      for (std::uint32_t i = 0; i < d.temporal; ++i) header_.temporal_names.push_back(src_.string("axis name"));
    }
    if (header_.flags & kFlagSampleIds) {
      for (std::uint64_t i = 0; i < header_.n_samples; ++i) header_.sample_ids.push_back(src_.string("sample id"));
    }
    header_.header_bytes = src_.offset();
    if (available && *available != header_.total_bytes()) {
      const char* kind = *available < header_.total_bytes() ? "truncated" : "trailing bytes in";
      throw FormatError(std::string(kind) + " STEB file: header implies " +
                            std::to_string(header_.total_bytes()) + " bytes, file has " +
                            std::to_string(*available),
                        std::min<std::uint64_t>(*available, header_.total_bytes()));
    }
  }

  const StebHeader& header() const { return header_; }
  std::uint64_t remaining_samples() const { return header_.n_samples - next_index_; }

  /// Reads the next sample into `out`; false once all samples are consumed.
  bool next(GridSample& out) {
    if (next_index_ == header_.n_samples) return false;
    const std::uint64_t start = src_.offset();
    const std::size_t n = header_.dims.values_per_sample();
    buffer_.resize(n * 4);
    src_.read(buffer_.data(), buffer_.size(), "sample values");
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(buffer_.data()) + 4 * i;
      const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t{b[3]} << 24);
      out.values[i] = std::bit_cast<float>(bits);
      if (!std::isfinite(out.values[i])) {
        throw FormatError("non-finite embedding value in sample " + std::to_string(next_index_),
                          start + 4 * i);
      }
    }
    out.label = src_.u32("label");
    if (out.label >= header_.dims.n_classes) {
      throw FormatError("label " + std::to_string(out.label) + " outside [0, " +
                            std::to_string(header_.dims.n_classes) + ")",
                        src_.offset() - 4);
    }
    out.id = header_.sample_ids.empty() ? std::to_string(next_index_) : header_.sample_ids[next_index_];
    ++next_index_;
    return true;
  }

 private:
  detail::ByteSource src_;
  StebHeader header_;
  std::uint64_t next_index_ = 0;
  std::vector<char> buffer_;
};

inline Dataset read_dataset(std::istream& is) {
  StebReader reader(is);
  Dataset ds;
  ds.dims = reader.header().dims;
  ds.spatial_names = reader.header().spatial_names;
  ds.temporal_names = reader.header().temporal_names;
  ds.samples.reserve(reader.header().n_samples);
  GridSample s;
  while (reader.next(s)) ds.samples.push_back(s);
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_dataset(is);
}

/// Parses an in-memory STEB image.
inline Dataset parse_dataset(std::string_view bytes) {
  std::istringstream is(std::string(bytes), std::ios::binary);
  return read_dataset(is);
}

// ---------------------------------------------------------------------------
// Split manifests

struct SplitManifest {
  std::uint32_t version = 1;
  std::vector<std::string> train, validation, test;

  bool operator==(const SplitManifest&) const = default;

  /// Throws DataError on overlapping splits or ids missing from `ds`.
  void validate(const Dataset* ds = nullptr) const {
    std::set<std::string> seen;
    for (const auto* split : {&train, &validation, &test}) {
      for (const auto& id : *split) {
        if (!seen.insert(id).second) throw DataError("manifest id '" + id + "' appears twice");
      }
    }
    if (ds) {
      std::set<std::string> have;
      for (const auto& s : ds->samples) have.insert(s.id);
      for (const auto& id : seen) {
        if (!have.count(id)) throw DataError("manifest id '" + id + "' not in dataset");
      }
    }
  }
};

inline nlohmann::json to_json(const SplitManifest& m) {
  return {{"version", m.version}, {"train", m.train}, {"validation", m.validation}, {"test", m.test}};
}

inline SplitManifest parse_manifest(const std::string& text) {
  SplitManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != 1) throw DataError("unsupported manifest version " + std::to_string(m.version));
    m.train = j.at("train").get<std::vector<std::string>>();
    m.validation = j.at("validation").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

inline SplitManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str());
}

inline void write_manifest(const SplitManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << to_json(m).dump(1) << "\n";
}

/// Samples with the listed ids, in listed order.
inline std::vector<GridSample> select(const Dataset& ds, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) index.emplace(ds.samples[i].id, i);
  std::vector<GridSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("id '" + id + "' not in dataset");
    out.push_back(ds.samples[it->second]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preparation

/// Z-scores each sample over all of its values (eps guards constant samples).
inline void zscore_samples(std::vector<GridSample>& samples, double eps = 1e-6) {
  for (auto& s : samples) {
    double mean = 0.0;
    for (float v : s.values) mean += v;
    mean /= static_cast<double>(s.values.size());
    double var = 0.0;
    for (float v : s.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.values.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    for (auto& v : s.values) v = static_cast<float>((v - mean) * inv);
  }
}

/// Stacks samples[indices] into a [B, S, T, ℓ] tensor plus labels.
template <typename T>
Tensor<T> make_batch(const std::vector<GridSample>& samples, const GridDims& dims,
                     std::span<const std::size_t> indices, std::vector<std::uint32_t>* labels) {
  const std::size_t per = dims.values_per_sample();
  std::vector<T> data;
  data.reserve(indices.size() * per);
  if (labels) labels->clear();
  for (auto i : indices) {
    const auto& s = samples.at(i);
    if (s.values.size() != per) throw DataError("sample '" + s.id + "' does not match dims");
    for (float v : s.values) data.push_back(static_cast<T>(v));
    if (labels) labels->push_back(s.label);
  }
  return Tensor<T>({indices.size(), dims.spatial, dims.temporal, dims.embed_width}, std::move(data));
}

}  // namespace stamp
