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

#include "stamp/gradcheck.hpp"

namespace stamp {
namespace {

TEST(Gradcheck, TinyConfigPassesAndCoversEveryTable) {
  const auto c = tiny_config();
  const auto r = run_gradcheck(c);
  EXPECT_TRUE(r.passed()) << to_text(r);
  EXPECT_LT(r.worst(), 1e-4);
  EXPECT_EQ(r.tables.size(), init_params<double>(c, 0).named().size());
  EXPECT_LT(r.seconds, 60.0);
}

TEST(Gradcheck, EveryArchitectureVariantPasses) {
  for (auto pe : {PeMode::kNone, PeMode::kToken, PeMode::kSpatialTemporal}) {
    for (auto mixer : {MixerKind::kNone, MixerKind::kBasicGmlp}) {
      for (auto agg : {AggregatorKind::kMean, AggregatorKind::kAttentionPool}) {
        auto c = tiny_config();
        c.pe_mode = pe;
        c.mixer = mixer;
        c.aggregator = agg;
        c.n_classes = 3;
        GradcheckOptions opt;
        opt.batch = 3;
        const auto r = run_gradcheck(c, opt);
        EXPECT_TRUE(r.passed()) << to_string(pe) << "/" << to_string(mixer) << "/"
                                << to_string(agg) << "\n" << to_text(r);
      }
    }
  }
}

TEST(Gradcheck, WrongSignGradientFailsAndNamesWorstCoordinate) {
  GradcheckOptions opt;
  opt.tamper = [](const std::string& name, std::span<double> g) {
    if (name == "block1.up.weight") {
      for (auto& v : g) v = -v;
    }
  };
  const auto r = run_gradcheck(tiny_config(), opt);
  EXPECT_FALSE(r.passed());
  std::size_t failed = 0;
  for (const auto& t : r.tables) {
    if (t.passed) continue;
    ++failed;
    EXPECT_EQ(t.name, "block1.up.weight");
    EXPECT_NEAR(t.analytic, -t.numeric, 1e-6 * std::max(1.0, std::abs(t.numeric)));
  }
  EXPECT_EQ(failed, 1u);
  const auto text = to_text(r);
  EXPECT_NE(text.find("FAIL block1.up.weight"), std::string::npos);
  EXPECT_NE(text.find("worst_index="), std::string::npos);
  EXPECT_NE(text.find("result=fail"), std::string::npos);
}

TEST(Gradcheck, JsonMirrorsText) {
  const auto r = run_gradcheck(tiny_config());
  const auto j = to_json(r);
  EXPECT_EQ(j["passed"].get<bool>(), r.passed());
  EXPECT_EQ(j["tables"].size(), r.tables.size());
  EXPECT_EQ(j["tables"][0]["name"].get<std::string>(), "reduce.weight");
}

}  // namespace
}  // namespace stamp
