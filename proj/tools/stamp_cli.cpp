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


// stamp: train, evaluate and ablate spatial-temporal adapters over frozen
// embedding grids stored as STEB files.
//
// Exit codes: 0 ok, 1 gradient check failed, 2 usage or config error,
// 3 file could not be opened, 4 malformed data, 5 grid/checkpoint dimension
// mismatch, 6 training diverged (non-finite loss or gradient).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stamp/ablation.hpp"
#include "stamp/allocator.hpp"
#include "stamp/checkpoint.hpp"
#include "stamp/gradcheck.hpp"
#include "stamp/run_config.hpp"
#include "stamp/synthetic.hpp"
#include "stamp/train.hpp"

namespace fs = std::filesystem;

namespace {

using namespace stamp;

enum Exit : int {
  kOk = 0,
  kGradcheckFailed = 1,
  kUsage = 2,
  kIo = 3,
  kBadData = 4,
  kDimMismatch = 5,
  kDiverged = 6,
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Config file plus per-key flags. Flags are applied after the file, so they
// always win; a repeated flag keeps its last value.
struct ConfigSource {
  std::string file;
  std::vector<std::pair<std::string, std::string>> flags;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "key = value config file");
    for (const auto& k : config_keys()) {
      std::string flag = std::string("--") + k.name;
      for (auto& ch : flag) ch = ch == '_' ? '-' : ch;
      const std::string name = k.name;
      cmd->add_option_function<std::string>(
             flag, [this, name](const std::string& v) { flags.emplace_back(name, v); }, k.help)
          ->type_name("VALUE")
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  RunConfig resolve() const {
    RunConfig c = file.empty() ? RunConfig{} : read_run_config(file);
    for (const auto& [k, v] : flags) apply_setting(c, k, v);
    return c;
  }

  // What the user supplied, before resolution.
  std::string describe() const {
    std::string out = "config_file = " + (file.empty() ? std::string("(none)") : file) + "\n";
    if (!file.empty()) {
      std::ifstream is(file);
      std::string line;
      while (std::getline(is, line)) out += "  | " + line + "\n";
    }
    for (const auto& [k, v] : flags) out += "flag " + k + " = " + v + "\n";
    return out;
  }
};

struct Inputs {
  Dataset data;
  SplitManifest manifest;
  StampConfig model;
};

Inputs load_inputs(const RunConfig& c) {
  if (c.dataset.empty()) throw UsageError("no dataset given (--dataset or 'dataset =' in the config)");
  if (c.manifest.empty()) throw UsageError("no manifest given (--manifest or 'manifest =' in the config)");
  Inputs in{read_dataset(c.dataset), read_manifest(c.manifest), c.model};
  in.manifest.validate(&in.data);
  in.model.spatial = in.data.dims.spatial;
  in.model.temporal = in.data.dims.temporal;
  in.model.embed_width = in.data.dims.embed_width;
  in.model.n_classes = in.data.dims.n_classes;
  in.model.validate();
  return in;
}

void echo_config(const fs::path& dir, const RunConfig& c, const ConfigSource& src) {
  make_dir(dir);
  write_file(dir / "config.resolved", to_text(c));
  write_file(dir / "config.json", to_json(c).dump(2) + "\n");
  write_file(dir / "config.source", src.describe());
}

// ---------------------------------------------------------------------------

int cmd_train(const ConfigSource& src, bool quiet) {
  const RunConfig cfg = src.resolve();
  const auto in = load_inputs(cfg);
  const fs::path out = cfg.output;
  echo_config(out, cfg, src);
  const auto train = select(in.data, in.manifest.train);
  const auto val = select(in.data, in.manifest.validation);
  const auto test = select(in.data, in.manifest.test);
  if (test.empty()) throw DataError("test split is empty");

  std::vector<EvalReport> reports;
  for (const auto seed : cfg.seeds) {
    const fs::path dir = out / ("seed-" + std::to_string(seed));
    make_dir(dir);
    std::ofstream log(dir / "train.log", std::ios::trunc);
    if (!log) throw IoError("cannot open '" + (dir / "train.log").string() + "' for writing");
    StampModel<float> model(in.model, seed);
    const auto result = fit(model, train, val, in.data.dims, cfg.training, seed,
                            [&](const EpochRecord& r) {
                              log << r.to_line() << "\n" << std::flush;
                              if (!quiet) std::cerr << "seed=" << seed << " " << r.to_line() << "\n";
                            });
    if (result.diverged) {
      log << "diverged: " << result.divergence << "\n";
      throw DivergenceError("seed " + std::to_string(seed) + ": " + result.divergence);
    }
    save_checkpoint(model, (dir / "model.stmp").string());
    const auto report = evaluate(model, test, in.data.dims);
    write_file(dir / "report.txt", to_text(report));
    write_file(dir / "report.json", to_json(report).dump(2) + "\n");
    reports.push_back(report);
    std::cout << "seed=" << seed << " best_epoch="
              << (result.best_epoch ? std::to_string(*result.best_epoch) : std::string("last"))
              << " test." << report.monitor_name() << "=" << report.monitor() << "\n"
              << std::flush;
  }
  const auto agg = aggregate_seeds(reports);
  write_file(out / "aggregate.txt", to_text(agg));
  write_file(out / "aggregate.json", to_json(agg).dump(2) + "\n");
  std::cout << to_text(agg);
  return kOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset,
                 const std::string& manifest, const std::string& split, bool json) {
  const auto model = load_checkpoint<float>(checkpoint);
  const auto data = read_dataset(dataset);
  check_dims(model.config(), data.dims);
  std::vector<GridSample> samples;
  if (manifest.empty()) {
    if (split != "all") throw UsageError("--split " + split + " needs --manifest");
    samples = data.samples;
  } else {
    const auto m = read_manifest(manifest);
    m.validate(&data);
    if (split == "train") samples = select(data, m.train);
    else if (split == "validation") samples = select(data, m.validation);
    else if (split == "test") samples = select(data, m.test);
    else samples = data.samples;
  }
  if (samples.empty()) throw DataError("split '" + split + "' is empty");
  const auto report = evaluate(model, samples, data.dims);
  std::cout << (json ? to_json(report).dump(2) + "\n" : to_text(report));
  return kOk;
}

int cmd_ablate(const ConfigSource& src, const std::string& axis_name, bool quiet) {
  const auto axis = parse_ablation_axis(axis_name);
  // Ablations default to the three-seed subset unless seeds are set.
  RunConfig base;
  base.seeds = kAblationSeeds;
  RunConfig cfg = src.file.empty() ? base : read_run_config(src.file, base);
  for (const auto& [k, v] : src.flags) apply_setting(cfg, k, v);
  const auto in = load_inputs(cfg);
  const fs::path out = cfg.output;
  echo_config(out, cfg, src);
  const auto table = run_ablation<float>(in.model, axis, in.data, in.manifest, cfg.training,
                                         cfg.seeds, [&](const AblationRow& r) {
    if (!quiet) {
      std::cerr << "variant " << r.label << " done: balanced_accuracy="
                << r.aggregate.at("balanced_accuracy").mean << "\n";
    }
  });
  write_file(out / "ablation.txt", to_text(table));
  write_file(out / "ablation.json", to_json(table).dump(2) + "\n");
  std::cout << to_text(table);
  return kOk;
}

int cmd_gradcheck(double tolerance, double step, const std::string& flip, bool json) {
  GradcheckOptions opt;
  opt.tolerance = tolerance;
  opt.step = step;
  if (!flip.empty()) {
    opt.tamper = [flip](const std::string& table, std::span<double> g) {
      if (table == flip) for (auto& v : g) v = -v;
    };
  }
  const auto report = run_gradcheck(tiny_config(), opt);
  if (!flip.empty() && std::none_of(report.tables.begin(), report.tables.end(),
                                    [&](const TableCheck& t) { return t.name == flip; })) {
    throw UsageError("no parameter table named '" + flip + "'");
  }
  std::cout << (json ? to_json(report).dump(2) + "\n" : to_text(report));
  return report.passed() ? kOk : kGradcheckFailed;
}

int cmd_generate(const std::string& kind, const SyntheticOptions& opt, const std::string& out_dir) {
  SyntheticDataset ds;
  if (kind == "interaction") ds = generate_interaction_dataset(opt);
  else if (kind == "separable") ds = generate_separable_dataset(opt);
  else throw UsageError("unknown kind '" + kind + "' (expected interaction or separable)");
  const fs::path out = out_dir;
  make_dir(out);
  write_dataset(ds.data, (out / "data.steb").string());
  write_manifest(ds.manifest, (out / "manifest.json").string());
  std::cout << "wrote " << (out / "data.steb").string() << " (" << ds.data.samples.size()
            << " samples, S=" << opt.spatial << " T=" << opt.temporal << " ell=" << opt.embed_width
            << " classes=" << opt.n_classes << ")\n"
            << "wrote " << (out / "manifest.json").string() << " (train=" << ds.manifest.train.size()
            << " validation=" << ds.manifest.validation.size() << " test=" << ds.manifest.test.size()
            << ")\n";
  return kOk;
}

int cmd_param_count(const ConfigSource& src, const GridDims& grid, bool json) {
  StampConfig c = src.resolve().model;
  c.spatial = grid.spatial;
  c.temporal = grid.temporal;
  c.embed_width = grid.embed_width;
  c.n_classes = grid.n_classes;
  const auto n = param_count(c);
  if (json) {
    std::cout << nlohmann::json{{"params", n}}.dump() << "\n";
  } else {
    std::cout << n << "\n";
  }
  return kOk;
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const ShapeError& e) {
    std::cerr << "dimension mismatch: " << e.what() << "\n";
    return kDimMismatch;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kBadData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kBadData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  stamp::tune_allocator();
  CLI::App app{"Spatial-temporal adapters over frozen embedding grids"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress per-epoch progress on stderr");

  ConfigSource train_src;
  auto* train = app.add_subcommand("train", "train one model per seed and report on the test split");
  train_src.attach(train);

  std::string ckpt, eval_data, eval_manifest, split = "test";
  bool eval_json = false;
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  eval->add_option("--dataset", eval_data, "STEB file")->required();
  eval->add_option("--manifest", eval_manifest, "split manifest");
  eval->add_option("--split", split, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  eval->add_flag("--json", eval_json, "print the JSON mirror instead of text");

  ConfigSource ablate_src;
  std::string axis;
  auto* ablate = app.add_subcommand("ablate", "sweep one architecture axis over the seed list");
  ablate->add_option("--axis", axis, "pe, mixer, aggregator or D")->required();
  ablate_src.attach(ablate);

  double tolerance = 1e-4, step = 1e-5;
  std::string flip;
  bool gc_json = false;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter table");
  gc->add_option("--tolerance", tolerance, "max relative error");
  gc->add_option("--step", step, "central-difference step");
  gc->add_option("--flip-sign", flip, "negate one table's analytic gradient (diagnostic)");
  gc->add_flag("--json", gc_json, "print the JSON mirror instead of text");

  SyntheticOptions syn;
  std::string kind = "interaction", syn_out;
  bool no_distractors = false;
  auto* gen = app.add_subcommand("generate-synthetic", "write a synthetic STEB dataset and manifest");
  gen->add_option("--kind", kind, "interaction or separable");
  gen->add_option("--out", syn_out, "output directory")->required();
  gen->add_option("--spatial", syn.spatial, "S");
  gen->add_option("--temporal", syn.temporal, "T");
  gen->add_option("--embed-width", syn.embed_width, "ell");
  gen->add_option("--classes", syn.n_classes, "number of classes");
  gen->add_option("--samples", syn.n_samples, "number of samples");
  gen->add_option("--noise", syn.noise, "Gaussian noise sigma");
  gen->add_option("--amplitude", syn.amplitude, "signature scale");
  gen->add_option("--seed", syn.seed, "generator seed");
  gen->add_flag("--no-distractors", no_distractors, "interaction data without distractors");

  ConfigSource pc_src;
  GridDims grid{};
  bool pc_json = false;
  auto* pc = app.add_subcommand("param-count", "closed-form trainable parameter count");
  pc->add_option("--spatial", grid.spatial, "S")->required();
  pc->add_option("--temporal", grid.temporal, "T")->required();
  pc->add_option("--embed-width", grid.embed_width, "ell")->required();
  pc->add_option("--classes", grid.n_classes, "number of classes")->required();
  pc->add_flag("--json", pc_json, "print JSON");
  pc_src.attach(pc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  return guarded([&] {
    if (*train) return cmd_train(train_src, quiet);
    if (*eval) return cmd_evaluate(ckpt, eval_data, eval_manifest, split, eval_json);
    if (*ablate) return cmd_ablate(ablate_src, axis, quiet);
    if (*gc) return cmd_gradcheck(tolerance, step, flip, gc_json);
    if (*gen) {
      syn.distractors = !no_distractors;
      return cmd_generate(kind, syn, syn_out);
    }
    return cmd_param_count(pc_src, grid, pc_json);
  });
}
