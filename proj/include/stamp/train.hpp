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


// Mini-batch cross-entropy training with AdamW and the one-cycle schedule,
// per-epoch validation and best-monitor checkpoint selection.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stamp/dataset.hpp"
#include "stamp/errors.hpp"
#include "stamp/metrics.hpp"
#include "stamp/model.hpp"
#include "stamp/optim.hpp"
#include "stamp/random.hpp"

namespace stamp {

inline constexpr std::uint64_t kMasterSeed = 42;
inline const std::vector<std::uint64_t> kCanonicalSeeds{654, 114, 25, 759, 281};
inline const std::vector<std::uint64_t> kAblationSeeds{654, 114, 25};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  AdamWOptions adamw;
  OneCycleOptions schedule;
};

struct EpochRecord {
  std::size_t epoch = 0;    // 1-based
  std::size_t step = 0;     // optimizer steps taken so far
  double lr = 0.0;          // learning rate of the epoch's last step
  double train_loss = 0.0;  // mean batch loss
  std::optional<EvalReport> validation;
  bool best = false;

  /// One line: epoch=.. step=.. lr=.. loss=.. val.<metric>=.. monitor=.. best=0|1
  std::string to_line() const {
    std::ostringstream os;
    os << std::setprecision(9) << "epoch=" << epoch << " step=" << step << " lr=" << lr
       << " loss=" << train_loss;
    if (validation) {
      for (const auto& [name, value] : validation->metrics()) os << " val." << name << "=" << value;
      os << " monitor=" << validation->monitor_name();
    }
    os << " best=" << (best ? 1 : 0);
    return os.str();
  }
};

/// Keeps the first epoch attaining the maximum monitor value.
class BestTracker {
 public:
  bool offer(std::size_t epoch, double monitor) {
    if (best_epoch_ && !(monitor > best_)) return false;
    best_ = monitor;
    best_epoch_ = epoch;
    return true;
  }
  std::optional<std::size_t> best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }

 private:
  std::optional<std::size_t> best_epoch_;
  double best_ = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::optional<std::size_t> best_epoch;
  double best_monitor = 0.0;
  double initial_loss = 0.0;  // first batch, before any update
  bool diverged = false;
  std::string divergence;
};

/// Class probabilities for `samples`, row-major [N, n_classes], in f64.
template <typename T>
std::vector<double> predict(const StampModel<T>& model, const std::vector<GridSample>& samples,
                            const GridDims& dims, std::size_t batch_size = 256) {
  std::vector<double> out;
  out.reserve(samples.size() * model.config().n_classes);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.resize(std::min(batch_size, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto probs = model.proba(make_batch<T>(samples, dims, idx, nullptr));
    for (T v : probs.data()) out.push_back(static_cast<double>(v));
  }
  return out;
}

template <typename T>
EvalReport evaluate(const StampModel<T>& model, const std::vector<GridSample>& samples,
                    const GridDims& dims) {
  std::vector<std::uint32_t> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return evaluate_predictions(labels, predict(model, samples, dims), model.config().n_classes);
}

/// Throws ShapeError if the data grid does not match the model.
inline void check_dims(const StampConfig& c, const GridDims& d) {
  if (d.spatial != c.spatial || d.temporal != c.temporal || d.embed_width != c.embed_width ||
      d.n_classes != c.n_classes) {
    throw ShapeError("dataset grid (S=" + std::to_string(d.spatial) + ", T=" +
                     std::to_string(d.temporal) + ", ell=" + std::to_string(d.embed_width) +
                     ", classes=" + std::to_string(d.n_classes) + ") does not match model (S=" +
                     std::to_string(c.spatial) + ", T=" + std::to_string(c.temporal) + ", ell=" +
                     std::to_string(c.embed_width) + ", classes=" + std::to_string(c.n_classes) +
                     ")");
  }
}

/// Trains `model` in place. On return the model holds the parameters of the
/// best validation epoch (final parameters when `val` is empty). A
/// non-finite loss or gradient stops training, sets `diverged` and keeps the
/// best parameters seen so far.
template <typename T>
TrainResult fit(StampModel<T>& model, const std::vector<GridSample>& train,
                const std::vector<GridSample>& val, const GridDims& dims,
                const TrainOptions& opt, std::uint64_t seed,
                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  check_dims(model.config(), dims);
  if (train.empty()) throw DataError("training split is empty");
  if (opt.batch_size == 0 || opt.epochs == 0) throw ConfigError("epochs and batch size must be positive");
  const std::size_t batches = (train.size() + opt.batch_size - 1) / opt.batch_size;
  const OneCycleSchedule schedule(opt.epochs * batches, opt.schedule);
  const auto& params = model.params();
  AdamW<T> optimizer(params.named(), opt.adamw);

  TrainResult result;
  BestTracker tracker;
  std::vector<std::vector<T>> best_snapshot;
  std::vector<std::size_t> order(train.size());
  std::vector<std::uint32_t> labels;
  std::size_t step = 0;
  try {
    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      CounterRng(derive_key({seed, 0x5f1e, epoch})).shuffle(order);
      EpochRecord rec;
      rec.epoch = epoch;
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * opt.batch_size;
        const std::size_t hi = std::min(lo + opt.batch_size, train.size());
        const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        const auto batch = make_batch<T>(train, dims, idx, &labels);
        ForwardContext ctx{true, derive_key({seed, epoch, b}), 0};
        params.zero_grad();
        auto loss = cross_entropy(model.logits(batch, ctx), labels);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(b));
        }
        if (step == 0) result.initial_loss = lv;
        loss.backward();
        rec.lr = schedule.lr(step);
        optimizer.step(rec.lr);
        ++step;
        loss_sum += lv;
      }
      rec.step = step;
      rec.train_loss = loss_sum / static_cast<double>(batches);
      if (!val.empty()) {
        rec.validation = evaluate(model, val, dims);
        rec.best = tracker.offer(epoch, rec.validation->monitor());
        if (rec.best) best_snapshot = params.snapshot();
      }
      result.log.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
  } catch (const DivergenceError& e) {
    result.diverged = true;
    result.divergence = e.what();
  }
  result.best_epoch = tracker.best_epoch();
  result.best_monitor = tracker.best_value();
  if (!best_snapshot.empty()) params.restore(best_snapshot);
  return result;
}

struct RunResult {
  std::uint64_t seed = 0;
  TrainResult training;
  EvalReport test;
};

/// Model init, training and test evaluation for one seed.
template <typename T>
RunResult run_seed(const StampConfig& config, const Dataset& data, const SplitManifest& manifest,
                   const TrainOptions& opt, std::uint64_t seed,
                   const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  check_dims(config, data.dims);
  manifest.validate(&data);
  StampModel<T> model(config, seed);
  RunResult r;
  r.seed = seed;
  r.training = fit(model, select(data, manifest.train), select(data, manifest.validation),
                   data.dims, opt, seed, on_epoch);
  const auto test = select(data, manifest.test);
  if (test.empty()) throw DataError("test split is empty");
  r.test = evaluate(model, test, data.dims);
  return r;
}

inline std::vector<EvalReport> test_reports(const std::vector<RunResult>& runs) {
  std::vector<EvalReport> out;
  for (const auto& r : runs) out.push_back(r.test);
  return out;
}

}  // namespace stamp
