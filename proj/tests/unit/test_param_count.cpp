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

#include "stamp/config.hpp"
#include "stamp/model.hpp"

namespace stamp {
namespace {

StampConfig motor_imagery(std::size_t spatial) {
  StampConfig c;
  c.spatial = spatial;
  c.temporal = 4;
  c.embed_width = 1024;
  c.n_classes = 4;
  return c;
}

TEST(ParamCount, FourClassTwentyTwoChannelAnchor) {
  const auto n = static_cast<double>(param_count(motor_imagery(22)));
  EXPECT_EQ(param_count(motor_imagery(22)), 697332u);
  EXPECT_LE(std::abs(n - 720000.0) / 720000.0, 0.05);
}

TEST(ParamCount, FourClassSixtyFourChannelAnchor) {
  const auto n = static_cast<double>(param_count(motor_imagery(64)));
  EXPECT_EQ(param_count(motor_imagery(64)), 753444u);
  EXPECT_LE(std::abs(n - 780000.0) / 780000.0, 0.05);
}

TEST(ParamCount, HalvingWidthHalvesTheReductionTerm) {
  auto c = motor_imagery(22);
  c.pe_mode = PeMode::kNone;
  c.mixer = MixerKind::kNone;
  c.aggregator = AggregatorKind::kMean;
  const auto full = param_count(c);
  c.model_width /= 2;
  const auto half = param_count(c);
  // Only ℓD and the output map Dn depend on D here.
  EXPECT_EQ(full - half, 1024u * 64 + 64u * 4);
}

TEST(ParamCount, TokenVersusAxisTablesDifference) {
  auto c = motor_imagery(22);
  c.pe_mode = PeMode::kToken;
  const auto token = param_count(c);
  c.pe_mode = PeMode::kSpatialTemporal;
  const auto axes = param_count(c);
  EXPECT_EQ(token - axes, 22u * 4 * 128 - (22u + 4) * 128);
}

TEST(ParamCount, InvalidConfigIsRejected) {
  auto c = motor_imagery(22);
  c.heads = 3;
  EXPECT_THROW(param_count(c), ConfigError);
}

TEST(ParamCount, ClosedFormMatchesAllocatedTablesForEveryVariant) {
  for (auto pe : {PeMode::kNone, PeMode::kToken, PeMode::kSpatialTemporal, PeMode::kAll}) {
    for (auto mixer : {MixerKind::kNone, MixerKind::kBasicGmlp, MixerKind::kCrissCrossGmlp}) {
      for (auto agg : {AggregatorKind::kMean, AggregatorKind::kAttentionPool}) {
        StampConfig c;
        c.spatial = 5;
        c.temporal = 3;
        c.embed_width = 12;
        c.model_width = 8;
        c.blocks = 2;
        c.hidden = 6;
        c.heads = 2;
        c.queries = 3;
        c.n_classes = 3;
        c.pe_mode = pe;
        c.mixer = mixer;
        c.aggregator = agg;
        const auto params = init_params<float>(c, 1);
        std::size_t counted = 0;
        for (const auto& t : params.named()) counted += t.value.size();
        EXPECT_EQ(counted, param_count(c))
            << to_string(pe) << "/" << to_string(mixer) << "/" << to_string(agg);
        EXPECT_EQ(params.scalar_count(), param_count(c));
      }
    }
  }
}

TEST(ParamCount, PaperScaleAllocationMatchesClosedForm) {
  const auto c = motor_imagery(22);
  EXPECT_EQ(init_params<float>(c, 42).scalar_count(), param_count(c));
}

}  // namespace
}  // namespace stamp
