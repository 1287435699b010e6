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

// The spatial-temporal adapter: linear reduction of frozen embeddings,
// positional tables, gated-MLP token mixing, attention pooling and the
// residual-mixed linear head.
//
// All layer functions take batched grids shaped [B, S, T, width].

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stamp/config.hpp"
#include "stamp/ops.hpp"
#include "stamp/random.hpp"
#include "stamp/tensor.hpp"

namespace stamp {

template <typename T>
struct GmlpBlock {
  Tensor<T> norm_gain, norm_bias;
  Tensor<T> up_weight, up_bias;              // U : D -> h
  Tensor<T> temporal_weight, temporal_bias;  // T -> T gate (criss-cross)
  Tensor<T> spatial_weight, spatial_bias;    // S -> S gate (criss-cross)
  Tensor<T> token_weight, token_bias;        // S·T -> S·T gate (basic)
  Tensor<T> down_weight, down_bias;          // V : h (or h/2) -> D
};

template <typename T>
struct PoolHead {
  Tensor<T> proj_weight, proj_bias;  // W_a : D -> d
  Tensor<T> queries;                 // Q x d
};

template <typename T>
struct NamedTable {
  std::string name;
  Tensor<T> value;
};

template <typename T>
struct StampParams {
  Tensor<T> reduce;  // ℓ x D, no bias
  Tensor<T> pe_token, pe_spatial, pe_temporal;
  std::vector<GmlpBlock<T>> blocks;
  std::vector<PoolHead<T>> heads;
  Tensor<T> out_weight, out_bias;

  /// Every allocated table in canonical order. Entries share storage with
  /// the members, so writes through them update the model.
  std::vector<NamedTable<T>> named() const {
    std::vector<NamedTable<T>> out;
    auto push = [&out](std::string name, const Tensor<T>& t) {
      if (t.defined()) out.push_back({std::move(name), t});
    };
    push("reduce.weight", reduce);
    push("pe.token", pe_token);
    push("pe.spatial", pe_spatial);
    push("pe.temporal", pe_temporal);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      const std::string p = "block" + std::to_string(i) + ".";
      push(p + "norm.gain", b.norm_gain);
      push(p + "norm.bias", b.norm_bias);
      push(p + "up.weight", b.up_weight);
      push(p + "up.bias", b.up_bias);
      push(p + "temporal_gate.weight", b.temporal_weight);
      push(p + "temporal_gate.bias", b.temporal_bias);
      push(p + "spatial_gate.weight", b.spatial_weight);
      push(p + "spatial_gate.bias", b.spatial_bias);
      push(p + "token_gate.weight", b.token_weight);
      push(p + "token_gate.bias", b.token_bias);
      push(p + "down.weight", b.down_weight);
      push(p + "down.bias", b.down_bias);
    }
    for (std::size_t a = 0; a < heads.size(); ++a) {
      const std::string p = "mhap.head" + std::to_string(a) + ".";
      push(p + "proj.weight", heads[a].proj_weight);
      push(p + "proj.bias", heads[a].proj_bias);
      push(p + "queries", heads[a].queries);
    }
    push("out.weight", out_weight);
    push("out.bias", out_bias);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : named()) n += t.value.size();
    return n;
  }

  void zero_grad() const {
    for (auto& t : named()) t.value.zero_grad();
  }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    for (const auto& t : named()) out.emplace_back(t.value.data().begin(), t.value.data().end());
    return out;
  }

  void restore(const std::vector<std::vector<T>>& values) const {
    auto tables = named();
    if (values.size() != tables.size()) throw UsageError("restore: table count mismatch");
    for (std::size_t i = 0; i < tables.size(); ++i) {
      auto dst = tables[i].value.mutable_data();
      if (values[i].size() != dst.size()) throw UsageError("restore: table size mismatch");
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }
};

namespace detail {

template <typename T>
Tensor<T> uniform_table(Shape shape, std::size_t fan_in, CounterRng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> normal_table(Shape shape, double stddev, CounterRng& rng) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

}  // namespace detail

inline constexpr double kGateInitStd = 1e-6;
inline constexpr double kPositionalInitStd = 0.02;

/// Fresh parameters. Gating maps ~N(0, 1e-6²) with unit bias so each gate
/// starts as a pass-through of its first half; other linear maps are
/// uniform in ±sqrt(1/fan_in); positional tables ~N(0, 0.02²).
template <typename T>
StampParams<T> init_params(const StampConfig& c, std::uint64_t seed) {
  c.validate();
  CounterRng rng(derive_key({seed, 0x1417}));
  const std::size_t S = c.spatial, Tt = c.temporal, D = c.model_width, h = c.hidden;
  StampParams<T> p;
  p.reduce = detail::uniform_table<T>({c.embed_width, D}, c.embed_width, rng);
  if (uses_token_table(c.pe_mode)) {
    p.pe_token = detail::normal_table<T>({S, Tt, D}, kPositionalInitStd, rng);
  }
  if (uses_axis_tables(c.pe_mode)) {
    p.pe_spatial = detail::normal_table<T>({S, D}, kPositionalInitStd, rng);
    p.pe_temporal = detail::normal_table<T>({Tt, D}, kPositionalInitStd, rng);
  }
  if (c.mixer != MixerKind::kNone) {
    for (std::size_t i = 0; i < c.blocks; ++i) {
      GmlpBlock<T> b;
      b.norm_gain = Tensor<T>::full({D}, T{1}, true);
      b.norm_bias = Tensor<T>::zeros({D}, true);
      b.up_weight = detail::uniform_table<T>({D, h}, D, rng);
      b.up_bias = detail::uniform_table<T>({h}, D, rng);
      if (c.mixer == MixerKind::kCrissCrossGmlp) {
        b.temporal_weight = detail::normal_table<T>({Tt, Tt}, kGateInitStd, rng);
        b.temporal_bias = Tensor<T>::full({Tt}, T{1}, true);
        b.spatial_weight = detail::normal_table<T>({S, S}, kGateInitStd, rng);
        b.spatial_bias = Tensor<T>::full({S}, T{1}, true);
        b.down_weight = detail::uniform_table<T>({h, D}, h, rng);
        b.down_bias = detail::uniform_table<T>({D}, h, rng);
      } else {
        const std::size_t N = c.tokens();
        b.token_weight = detail::normal_table<T>({N, N}, kGateInitStd, rng);
        b.token_bias = Tensor<T>::full({N}, T{1}, true);
        b.down_weight = detail::uniform_table<T>({h / 2, D}, h / 2, rng);
        b.down_bias = detail::uniform_table<T>({D}, h / 2, rng);
      }
      p.blocks.push_back(std::move(b));
    }
  }
  if (c.aggregator == AggregatorKind::kAttentionPool) {
    const std::size_t d = c.head_width();
    for (std::size_t a = 0; a < c.heads; ++a) {
      PoolHead<T> hp;
      hp.proj_weight = detail::uniform_table<T>({D, d}, D, rng);
      hp.proj_bias = detail::uniform_table<T>({d}, D, rng);
      hp.queries = detail::uniform_table<T>({c.queries, d}, d, rng);
      p.heads.push_back(std::move(hp));
    }
  }
  p.out_weight = detail::uniform_table<T>({D, c.n_classes}, D, rng);
  p.out_bias = detail::uniform_table<T>({c.n_classes}, D, rng);
  return p;
}

/// Per-call state: training switch plus the key from which each dropout
/// site derives its mask (site index = order of dropout calls in forward).
struct ForwardContext {
  bool training = false;
  std::uint64_t dropout_key = 0;
  std::uint64_t dropout_site = 0;

  CounterRng next_dropout_rng() { return CounterRng(derive_key({dropout_key, dropout_site++})); }
};

/// Optional diagnostics captured during attention pooling.
template <typename T>
struct PoolTrace {
  std::vector<Tensor<T>> attention;      // per head, [B, S·T, Q]
  std::vector<Tensor<T>> query_weights;  // per head, [B, Q] (β after softmax)
};

// ---------------------------------------------------------------------------
// Layers

/// E[.., ℓ] · W[ℓ, D]. No bias.
template <typename T>
Tensor<T> reduce(const Tensor<T>& grid, const Tensor<T>& weight) {
  if (grid.rank() == 0 || grid.shape().back() != weight.dim(0)) {
    throw ShapeError("reduce: embedding width of " + to_string(grid.shape()) +
                     " does not match projection " + to_string(weight.shape()));
  }
  return matmul(grid, weight);
}

/// Adds the positional tables selected by `mode` to a [B, S, T, D] grid.
template <typename T>
Tensor<T> add_positional(const Tensor<T>& grid, const StampParams<T>& p, PeMode mode) {
  if (mode == PeMode::kNone) return grid;
  if (grid.rank() != 4) throw ShapeError("add_positional: expected [B, S, T, D] grid");
  const std::size_t S = grid.dim(1), Tt = grid.dim(2), D = grid.dim(3);
  std::optional<Tensor<T>> table;
  auto accumulate = [&table](const Tensor<T>& t) { table = table ? add(*table, t) : t; };
  if (uses_token_table(mode)) {
    if (p.pe_token.shape() != Shape{S, Tt, D}) {
      throw ShapeError("add_positional: token table " + to_string(p.pe_token.shape()) +
                       " vs grid " + to_string(grid.shape()));
    }
    accumulate(p.pe_token);
  }
  if (uses_axis_tables(mode)) {
    if (p.pe_spatial.shape() != Shape{S, D} || p.pe_temporal.shape() != Shape{Tt, D}) {
      throw ShapeError("add_positional: axis tables do not match grid " +
                       to_string(grid.shape()));
    }
    accumulate(repeat_axis(p.pe_spatial, 1, Tt));
    accumulate(repeat_axis(p.pe_temporal, 0, S));
  }
  return broadcast_add(grid, *table);
}

namespace detail {

template <typename T>
Tensor<T> gate_along(const Tensor<T>& z, const Tensor<T>& weight, const Tensor<T>& bias,
                     long axis) {
  const std::size_t h = z.shape().back();
  if (h % 2 != 0) throw ShapeError("gating unit: feature width " + std::to_string(h) + " is odd");
  auto halves = split(z, -1, {h / 2, h / 2});
  return mul(halves[0], linear_along(halves[1], weight, &bias, axis));
}

}  // namespace detail

/// Z[B, S, T, h] -> Z₁ ⊙ (W_S · Z₂ + b_S), the map acting on the spatial axis.
template <typename T>
Tensor<T> spatial_gate(const Tensor<T>& z, const Tensor<T>& weight, const Tensor<T>& bias) {
  return detail::gate_along(z, weight, bias, -3);
}

/// Z[B, S, T, h] -> Z₁ ⊙ (W_T · Z₂ + b_T), the map acting on the temporal axis.
template <typename T>
Tensor<T> temporal_gate(const Tensor<T>& z, const Tensor<T>& weight, const Tensor<T>& bias) {
  return detail::gate_along(z, weight, bias, -2);
}

/// Criss-cross gated MLP block with pre-norm and residual:
///   Z = GELU(LN(E)·U), Z̃ = [g_T(Z) ‖ g_S(Z)], out = dropout(Z̃·V) + E.
template <typename T>
Tensor<T> cc_gmlp_block(const Tensor<T>& grid, const GmlpBlock<T>& b, double dropout_rate,
                        ForwardContext& ctx) {
  auto x = layer_norm(grid, b.norm_gain, b.norm_bias, T(1e-5));
  auto z = gelu(broadcast_add(matmul(x, b.up_weight), b.up_bias));
  auto mixed = concat<T>({temporal_gate(z, b.temporal_weight, b.temporal_bias),
                          spatial_gate(z, b.spatial_weight, b.spatial_bias)},
                         -1);
  auto e_hat = broadcast_add(matmul(mixed, b.down_weight), b.down_bias);
  e_hat = dropout(e_hat, dropout_rate, ctx.training, ctx.next_dropout_rng());
  return add(e_hat, grid);
}

/// Basic gated MLP block: one gate over the flattened S·T token axis.
template <typename T>
Tensor<T> b_gmlp_block(const Tensor<T>& grid, const GmlpBlock<T>& b, double dropout_rate,
                       ForwardContext& ctx) {
  if (grid.rank() != 4) throw ShapeError("b_gmlp_block: expected [B, S, T, D] grid");
  const std::size_t B = grid.dim(0), S = grid.dim(1), Tt = grid.dim(2);
  auto x = layer_norm(grid, b.norm_gain, b.norm_bias, T(1e-5));
  auto z = gelu(broadcast_add(matmul(x, b.up_weight), b.up_bias));
  const std::size_t h = z.shape().back();
  auto flat = reshape(z, {B, S * Tt, h});
  auto gated = reshape(detail::gate_along(flat, b.token_weight, b.token_bias, 1),
                       {B, S, Tt, h / 2});
  auto e_hat = broadcast_add(matmul(gated, b.down_weight), b.down_bias);
  e_hat = dropout(e_hat, dropout_rate, ctx.training, ctx.next_dropout_rng());
  return add(e_hat, grid);
}

/// Multi-head attention pooling of a [B, S, T, D] grid into [B, D].
/// Per head: H = Ê·W_a + b_a; for each query α = softmax_tokens(H·r/√d),
/// u = Σ α H, β = Σ α; then β_a = softmax_q(β) and z_a = Σ_q β_a,q u_q.
template <typename T>
Tensor<T> mhap(const Tensor<T>& grid, const std::vector<PoolHead<T>>& heads,
               PoolTrace<T>* trace = nullptr) {
  if (grid.rank() != 4) throw ShapeError("mhap: expected [B, S, T, D] grid");
  if (heads.empty()) throw ConfigError("mhap: no heads");
  const std::size_t B = grid.dim(0), N = grid.dim(1) * grid.dim(2), D = grid.dim(3);
  const std::size_t d = heads[0].proj_weight.dim(1);
  if (d * heads.size() != D) {
    throw ShapeError("mhap: " + std::to_string(heads.size()) + " heads of width " +
                     std::to_string(d) + " do not tile D=" + std::to_string(D));
  }
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  auto tokens = reshape(grid, {B, N, D});
  std::vector<Tensor<T>> summaries;
  for (const auto& head : heads) {
    const std::size_t Q = head.queries.dim(0);
    auto projected = broadcast_add(matmul(tokens, head.proj_weight), head.proj_bias);  // [B,N,d]
    auto scores = scale(matmul(projected, transpose(head.queries)), inv_sqrt_d);       // [B,N,Q]
    auto alpha = softmax(scores, 1);
    auto pooled = bmm(permute(alpha, {0, 2, 1}), projected);  // [B,Q,d]
    auto weight = sum_axis(alpha, 1);                         // [B,Q]
    auto query_weights = softmax(weight, 1);
    auto z = reshape(bmm(reshape(query_weights, {B, 1, Q}), pooled), {B, d});
    if (trace) {
      trace->attention.push_back(alpha);
      trace->query_weights.push_back(query_weights);
    }
    summaries.push_back(std::move(z));
  }
  return summaries.size() == 1 ? summaries[0] : concat(summaries, 1);
}

/// Token mean of a [B, S, T, D] grid -> [B, D].
template <typename T>
Tensor<T> token_mean(const Tensor<T>& grid) {
  if (grid.rank() != 4) throw ShapeError("token_mean: expected [B, S, T, D] grid");
  return mean_axis(reshape(grid, {grid.dim(0), grid.dim(1) * grid.dim(2), grid.dim(3)}), 1);
}

/// logits = W_out·(λ z + (1 − λ) ê) + b. With no summary (mean aggregation)
/// the head reads ê alone.
template <typename T>
Tensor<T> head_logits(const Tensor<T>* summary, const Tensor<T>& grid, double lambda,
                      const Tensor<T>& out_weight, const Tensor<T>& out_bias) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  auto e_mean = token_mean(grid);
  Tensor<T> mixed = e_mean;
  if (summary) {
    mixed = add(scale(*summary, static_cast<T>(lambda)), scale(e_mean, static_cast<T>(1.0 - lambda)));
  }
  return broadcast_add(matmul(mixed, out_weight), out_bias);
}

/// Full pipeline on a batch E[B, S, T, ℓ] -> logits [B, n_classes].
template <typename T>
Tensor<T> forward_logits(const StampParams<T>& p, const StampConfig& c, const Tensor<T>& batch,
                         ForwardContext& ctx, PoolTrace<T>* trace = nullptr) {
  if (batch.rank() != 4 || batch.dim(1) != c.spatial || batch.dim(2) != c.temporal ||
      batch.dim(3) != c.embed_width) {
    throw ShapeError("forward: batch " + to_string(batch.shape()) + " does not match config [B, " +
                     std::to_string(c.spatial) + ", " + std::to_string(c.temporal) + ", " +
                     std::to_string(c.embed_width) + "]");
  }
  auto grid = add_positional(reduce(batch, p.reduce), p, c.pe_mode);
  for (const auto& block : p.blocks) {
    grid = c.mixer == MixerKind::kBasicGmlp ? b_gmlp_block(grid, block, c.dropout, ctx)
                                            : cc_gmlp_block(grid, block, c.dropout, ctx);
  }
  if (c.aggregator == AggregatorKind::kAttentionPool) {
    auto z = dropout(mhap(grid, p.heads, trace), c.dropout, ctx.training, ctx.next_dropout_rng());
    return head_logits(&z, grid, c.lambda_mix, p.out_weight, p.out_bias);
  }
  return head_logits<T>(nullptr, grid, c.lambda_mix, p.out_weight, p.out_bias);
}

/// Class probabilities for a batch, inference mode.
template <typename T>
Tensor<T> predict_proba(const StampParams<T>& p, const StampConfig& c, const Tensor<T>& batch) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  return softmax(forward_logits(p, c, batch, ctx), -1);
}

/// Single grid E[S, T, ℓ] -> class-probability vector.
template <typename T>
std::vector<T> forward(const StampParams<T>& p, const StampConfig& c, const Tensor<T>& grid,
                       ForwardContext& ctx) {
  if (grid.rank() != 3) throw ShapeError("forward: expected [S, T, ell] grid");
  auto batch = reshape(grid, {1, grid.dim(0), grid.dim(1), grid.dim(2)});
  auto probs = softmax(forward_logits(p, c, batch, ctx), -1);
  return {probs.data().begin(), probs.data().end()};
}

/// Typed model handle bundling configuration and parameters.
template <typename T>
class StampModel {
 public:
  StampModel(StampConfig config, std::uint64_t seed)
      : config_(std::move(config)), params_(init_params<T>(config_, seed)) {}
  StampModel(StampConfig config, StampParams<T> params)
      : config_(std::move(config)), params_(std::move(params)) {}

  const StampConfig& config() const { return config_; }
  const StampParams<T>& params() const { return params_; }
  StampParams<T>& params() { return params_; }

  Tensor<T> logits(const Tensor<T>& batch, ForwardContext& ctx) const {
    return forward_logits(params_, config_, batch, ctx);
  }
  Tensor<T> proba(const Tensor<T>& batch) const { return predict_proba(params_, config_, batch); }

 private:
  StampConfig config_;
  StampParams<T> params_;
};

}  // namespace stamp
