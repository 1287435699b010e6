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

#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "stamp/dataset.hpp"

namespace stamp {
namespace {

Dataset small_dataset(std::size_t n = 10, bool ids = false, bool names = false) {
  Dataset ds;
  ds.dims = {3, 2, 8, 3};
  for (std::size_t i = 0; i < n; ++i) {
    GridSample s;
    s.id = ids ? "subj" + std::to_string(i) : std::to_string(i);
    s.label = static_cast<std::uint32_t>(i % 3);
    for (std::size_t k = 0; k < ds.dims.values_per_sample(); ++k) {
      s.values.push_back(static_cast<float>(i) * 0.5f - static_cast<float>(k) / 7.0f);
    }
    ds.samples.push_back(std::move(s));
  }
  if (names) {
    ds.spatial_names = {"C3", "Cz", "C4"};
    ds.temporal_names = {"w0", "w1"};
  }
  return ds;
}

TEST(Steb, HeaderPayloadArithmetic) {
  const auto bytes = serialize_dataset(small_dataset(10));
  std::istringstream is(bytes);
  StebReader reader(is);
  EXPECT_EQ(reader.header().payload_bytes(), 1960u);
  EXPECT_EQ(reader.header().header_bytes, kStebFixedHeader);
  EXPECT_EQ(bytes.size(), 40u + 1960u);
}

TEST(Steb, FixedHeaderLayoutIsLittleEndian) {
  const auto bytes = serialize_dataset(small_dataset(10));
  EXPECT_EQ(bytes.substr(0, 4), "STEB");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 10u);
  EXPECT_EQ(u32(12), 0u);
  EXPECT_EQ(u32(16), 3u);
  EXPECT_EQ(u32(20), 2u);
  EXPECT_EQ(u32(24), 8u);
  EXPECT_EQ(u32(28), 3u);
  EXPECT_EQ(u32(32), kDtypeF32);
  EXPECT_EQ(u32(36), 0u);
  // First label sits right after the first 48 floats.
  EXPECT_EQ(u32(40 + 48 * 4), 0u);
  EXPECT_EQ(u32(40 + 2 * (48 * 4 + 4) - 4), 1u);
}

TEST(Steb, RoundTripIsBitIdentical) {
  for (bool ids : {false, true}) {
    for (bool names : {false, true}) {
      const auto ds = small_dataset(7, ids, names);
      const auto bytes = serialize_dataset(ds);
      const auto back = parse_dataset(bytes);
      EXPECT_EQ(back, ds);
      EXPECT_EQ(serialize_dataset(back), bytes);
    }
  }
}

TEST(Steb, FileRoundTripAndStreamingMatchWholeRead) {
  const auto path = (std::filesystem::temp_directory_path() / "stamp_test_rt.steb").string();
  const auto ds = small_dataset(5, true, true);
  write_dataset(ds, path);
  const auto whole = read_dataset(path);
  std::ifstream is(path, std::ios::binary);
  StebReader reader(is);
  std::vector<GridSample> streamed;
  GridSample s;
  while (reader.next(s)) {
    streamed.push_back(s);
    EXPECT_EQ(reader.remaining_samples(), 5u - streamed.size());
  }
  EXPECT_EQ(streamed, whole.samples);
  EXPECT_EQ(whole, ds);
  std::remove(path.c_str());
}

TEST(Steb, SpecialValuesSurvive) {
  auto ds = small_dataset(1);
  ds.samples[0].values[0] = -0.0f;
  ds.samples[0].values[1] = std::numeric_limits<float>::denorm_min();
  ds.samples[0].values[2] = std::numeric_limits<float>::max();
  const auto back = parse_dataset(serialize_dataset(ds));
  EXPECT_TRUE(std::signbit(back.samples[0].values[0]));
  EXPECT_EQ(back.samples[0].values[1], std::numeric_limits<float>::denorm_min());
  EXPECT_EQ(back.samples[0].values[2], std::numeric_limits<float>::max());
}

TEST(Steb, BadMagicReportsOffsetZero) {
  auto bytes = serialize_dataset(small_dataset(2));
  bytes[0] = 'X';
  try {
    parse_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Steb, BadVersionReportsItsOffset) {
  auto bytes = serialize_dataset(small_dataset(2));
  bytes[4] = 9;
  try {
    parse_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Steb, TruncationNamesExpectedAndActualLength) {
  const auto bytes = serialize_dataset(small_dataset(10));
  try {
    parse_dataset(bytes.substr(0, 1000));
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2000"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1000"), std::string::npos) << msg;
    EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  }
  EXPECT_THROW(parse_dataset(bytes.substr(0, 20)), FormatError);
  EXPECT_THROW(parse_dataset(bytes + "x"), FormatError);
}

TEST(Steb, InvalidLabelOrNonFiniteValueIsAFormatError) {
  auto bytes = serialize_dataset(small_dataset(2));
  bytes[40 + 48 * 4] = 7;  // label of sample 0
  EXPECT_THROW(parse_dataset(bytes), FormatError);
  auto ds = small_dataset(1);
  ds.samples[0].values[3] = std::numeric_limits<float>::quiet_NaN();
  try {
    parse_dataset(serialize_dataset(ds));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 40u + 12u);
  }
}

TEST(Steb, WriterRejectsInconsistentSamples) {
  auto ds = small_dataset(2);
  ds.samples[1].values.pop_back();
  EXPECT_THROW(serialize_dataset(ds), DataError);
  ds = small_dataset(2);
  ds.samples[0].label = 3;
  EXPECT_THROW(serialize_dataset(ds), DataError);
}

TEST(Manifest, JsonRoundTripAndSelectionOrder) {
  SplitManifest m{1, {"3", "1"}, {"0"}, {"4", "2"}};
  const auto back = parse_manifest(to_json(m).dump());
  EXPECT_EQ(back, m);
  const auto ds = small_dataset(5);
  m.validate(&ds);
  const auto test = select(ds, m.test);
  ASSERT_EQ(test.size(), 2u);
  EXPECT_EQ(test[0].id, "4");
  EXPECT_EQ(test[1].id, "2");
}

TEST(Manifest, RejectsOverlapUnknownIdsAndMalformedJson) {
  EXPECT_THROW(parse_manifest(R"({"version":1,"train":["a"],"validation":["a"],"test":[]})"),
               DataError);
  EXPECT_THROW(parse_manifest(R"({"version":2,"train":[],"validation":[],"test":[]})"), DataError);
  EXPECT_THROW(parse_manifest("{not json"), DataError);
  const auto ds = small_dataset(2);
  SplitManifest m{1, {"0"}, {"9"}, {}};
  EXPECT_THROW(m.validate(&ds), DataError);
  EXPECT_THROW(select(ds, {"9"}), DataError);
}

TEST(Prepare, ZscoreGivesZeroMeanUnitVariance) {
  auto samples = small_dataset(3).samples;
  zscore_samples(samples);
  for (const auto& s : samples) {
    double m = 0, v = 0;
    for (float x : s.values) m += x;
    m /= s.values.size();
    for (float x : s.values) v += (x - m) * (x - m);
    v /= s.values.size();
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(Prepare, MakeBatchStacksInIndexOrder) {
  const auto ds = small_dataset(4);
  const std::vector<std::size_t> idx{2, 0};
  std::vector<std::uint32_t> labels;
  const auto batch = make_batch<double>(ds.samples, ds.dims, idx, &labels);
  EXPECT_EQ(batch.shape(), (Shape{2, 3, 2, 8}));
  EXPECT_EQ(labels, (std::vector<std::uint32_t>{2, 0}));
  EXPECT_DOUBLE_EQ(batch.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(batch.data()[48], 0.0);
}

}  // namespace
}  // namespace stamp
