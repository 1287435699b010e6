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


// Run configuration: a flat `key = value` text file with typed parsing.
// Command-line overrides go through the same setter so that both paths
// validate identically. Grid dims are not configurable; they come from the
// dataset header.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stamp/config.hpp"
#include "stamp/errors.hpp"
#include "stamp/train.hpp"

namespace stamp {

struct RunConfig {
  std::string dataset;
  std::string manifest;
  std::string output = "runs";
  StampConfig model;
  TrainOptions training;
  std::vector<std::uint64_t> seeds = kCanonicalSeeds;

  bool operator==(const RunConfig& o) const {
    return dataset == o.dataset && manifest == o.manifest && output == o.output &&
           model == o.model && seeds == o.seeds && training.epochs == o.training.epochs &&
           training.batch_size == o.training.batch_size &&
           training.adamw.beta1 == o.training.adamw.beta1 &&
           training.adamw.beta2 == o.training.adamw.beta2 &&
           training.adamw.eps == o.training.adamw.eps &&
           training.adamw.weight_decay == o.training.adamw.weight_decay &&
           training.schedule.initial_lr == o.training.schedule.initial_lr &&
           training.schedule.max_lr == o.training.schedule.max_lr &&
           training.schedule.pct_start == o.training.schedule.pct_start &&
           training.schedule.final_div == o.training.schedule.final_div;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view v) {
  N out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view v) {
  std::vector<std::uint64_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<std::uint64_t>("seeds", trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("seeds must list at least one seed");
  return out;
}

// Shortest text that parses back to the same double.
inline std::string shortest_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct ConfigKey {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
ConfigKey size_key(const char* name, const char* help, M member) {
  return {name, help,
          [=](RunConfig& c, std::string_view v) { member(c) = parse_number<std::size_t>(name, v); },
          [=](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <typename M>
ConfigKey double_key(const char* name, const char* help, M member) {
  return {name, help,
          [=](RunConfig& c, std::string_view v) { member(c) = parse_number<double>(name, v); },
          [=](const RunConfig& c) { return shortest_double(member(const_cast<RunConfig&>(c))); }};
}

template <typename M>
ConfigKey string_key(const char* name, const char* help, M member) {
  return {name, help, [=](RunConfig& c, std::string_view v) { member(c) = std::string(v); },
          [=](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }};
}

}  // namespace detail

/// Every configurable key, in echo order.
inline const std::vector<detail::ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys{
      string_key("dataset", "STEB file", [](RunConfig& c) -> auto& { return c.dataset; }),
      string_key("manifest", "split manifest (JSON)", [](RunConfig& c) -> auto& { return c.manifest; }),
      string_key("output", "output directory", [](RunConfig& c) -> auto& { return c.output; }),
      size_key("model_width", "D", [](RunConfig& c) -> auto& { return c.model.model_width; }),
      size_key("blocks", "L", [](RunConfig& c) -> auto& { return c.model.blocks; }),
      size_key("hidden", "h", [](RunConfig& c) -> auto& { return c.model.hidden; }),
      size_key("heads", "A", [](RunConfig& c) -> auto& { return c.model.heads; }),
      size_key("queries", "Q per head", [](RunConfig& c) -> auto& { return c.model.queries; }),
      {"pe_mode", "none, N, ST or NST",
       [](RunConfig& c, std::string_view v) { c.model.pe_mode = parse_pe_mode(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.pe_mode)); }},
      {"mixer", "none, b_gmlp or cc_gmlp",
       [](RunConfig& c, std::string_view v) { c.model.mixer = parse_mixer(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.mixer)); }},
      {"aggregator", "mean or mhap",
       [](RunConfig& c, std::string_view v) { c.model.aggregator = parse_aggregator(v); },
       [](const RunConfig& c) { return std::string(to_string(c.model.aggregator)); }},
      double_key("lambda", "mixing weight", [](RunConfig& c) -> auto& { return c.model.lambda_mix; }),
      double_key("dropout", "dropout rate", [](RunConfig& c) -> auto& { return c.model.dropout; }),
      size_key("epochs", "training epochs", [](RunConfig& c) -> auto& { return c.training.epochs; }),
      size_key("batch_size", "minibatch size", [](RunConfig& c) -> auto& { return c.training.batch_size; }),
      double_key("initial_lr", "OneCycle start", [](RunConfig& c) -> auto& { return c.training.schedule.initial_lr; }),
      double_key("max_lr", "OneCycle peak", [](RunConfig& c) -> auto& { return c.training.schedule.max_lr; }),
      double_key("pct_start", "OneCycle rise fraction", [](RunConfig& c) -> auto& { return c.training.schedule.pct_start; }),
      double_key("final_div", "OneCycle final divisor", [](RunConfig& c) -> auto& { return c.training.schedule.final_div; }),
      double_key("weight_decay", "AdamW decay", [](RunConfig& c) -> auto& { return c.training.adamw.weight_decay; }),
      double_key("beta1", "AdamW beta1", [](RunConfig& c) -> auto& { return c.training.adamw.beta1; }),
      double_key("beta2", "AdamW beta2", [](RunConfig& c) -> auto& { return c.training.adamw.beta2; }),
      double_key("eps", "AdamW epsilon", [](RunConfig& c) -> auto& { return c.training.adamw.eps; }),
      {"seeds", "comma-separated seed list",
       [](RunConfig& c, std::string_view v) { c.seeds = parse_seed_list(v); },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
         return s;
       }},
  };
  return keys;
}

/// Sets one key from its text form. Throws ConfigError on unknown keys or
/// unparsable values.
inline void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  for (const auto& k : config_keys()) {
    if (key == k.name) {
      k.set(c, detail::trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Parses `key = value` lines onto `base`. `#` starts a comment; blank lines
/// are ignored; a repeated key takes its last value.
inline RunConfig parse_run_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(base, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig read_run_config(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

/// Fully resolved config in the file format; parses back to an equal value.
inline std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& k : config_keys()) out += std::string(k.name) + " = " + k.get(c) + "\n";
  return out;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(c);
  j["seeds"] = c.seeds;
  return j;
}

}  // namespace stamp
