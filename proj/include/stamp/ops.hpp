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

// Differentiable tensor ops. Each op computes its forward value eagerly and,
// when an input requires grad, records a closure that accumulates input
// gradients from the output gradient.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "stamp/errors.hpp"
#include "stamp/random.hpp"
#include "stamp/tensor.hpp"

namespace stamp {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                     " differ");
  }
}

inline std::size_t normalize_axis(long axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  if (axis < -r || axis >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

/// Views a shape as [outer, extent, inner] around one axis.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
  AxisView(const Shape& s, std::size_t axis) {
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.size());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    const std::size_t n = self.grad.size();
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = detail::parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.size());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    const std::size_t n = self.grad.size();
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i];
    }
    if (T* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i];
    }
  });
}

/// Hadamard product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.size());
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    const std::size_t n = self.grad.size();
    const T* ad = detail::parent_data(self, 0);
    const T* bd = detail::parent_data(self, 1);
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * bd[i];
    }
    if (T* g = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return detail::make_result<T>(a.shape(), std::move(out), {&a}, [factor](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
    }
  });
}

/// x + v where v's shape is a suffix of x's shape (bias vectors, positional
/// tables added over the batch axis, ...).
template <typename T>
Tensor<T> broadcast_add(const Tensor<T>& x, const Tensor<T>& v) {
  const Shape& xs = x.shape();
  const Shape& vs = v.shape();
  const bool suffix = vs.size() <= xs.size() &&
                      std::equal(vs.begin(), vs.end(), xs.end() - static_cast<long>(vs.size()));
  if (!suffix) {
    throw ShapeError("broadcast_add: " + to_string(vs) + " is not a trailing shape of " +
                     to_string(xs));
  }
  const std::size_t inner = v.size();
  const std::size_t outer = x.size() / std::max<std::size_t>(inner, 1);
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto vd = v.data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += vd[i];
  }
  return detail::make_result<T>(xs, std::move(out), {&x, &v},
                                [outer, inner](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = detail::parent_grad(self, 1)) {
      for (std::size_t o = 0; o < outer; ++o) {
        const T* row = self.grad.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) g[i] += row[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {

/// c[rows, n] += a[rows, k] · b[k, n], four rows per pass so each loaded
/// row of b feeds four accumulators. Every output element still sums over k
/// in ascending order.
template <typename T>
void gemm_accumulate(std::size_t rows, std::size_t k, std::size_t n, const T* a, const T* b,
                     T* c) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    T* c0 = c + r * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    const T* a0 = a + r * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T x0 = a0[kk], x1 = a0[k + kk], x2 = a0[2 * k + kk], x3 = a0[3 * k + kk];
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += x0 * bv;
        c1[j] += x1 * bv;
        c2[j] += x2 * bv;
        c3[j] += x3 * bv;
      }
    }
  }
  for (; r < rows; ++r) {
    T* crow = c + r * n;
    const T* arow = a + r * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T x = arow[kk];
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* m, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
  }
  return t;
}

}  // namespace detail

/// a[..., m, k] · b[k, n] -> [..., m, n]. Leading axes of `a` are flattened
/// into rows.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1);
  const std::size_t rows = a.size() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<T> out(rows * n, T{0});
  detail::gemm_accumulate(rows, k, n, a.data().data(), b.data().data(), out.data());
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&a, &b},
                                [rows, k, n](detail::Node<T>& self) {
    const T* gd = self.grad.data();
    if (T* ga = detail::parent_grad(self, 0)) {
      const auto bt = detail::transposed(detail::parent_data(self, 1), k, n);
      detail::gemm_accumulate(rows, n, k, gd, bt.data(), ga);
    }
    if (T* gb = detail::parent_grad(self, 1)) {
      const T* ad = detail::parent_data(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* grow = gd + r * n;
        const T* arow = ad + r * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T av = arow[kk];
          T* gbrow = gb + kk * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

/// Batched product a[B, m, k] · b[B, k, n] -> [B, m, n].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: cannot multiply " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(batch * m * n, T{0});
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t i = 0; i < m; ++i) {
      T* orow = out.data() + (bi * m + i) * n;
      const T* arow = ad + (bi * m + i) * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = bd + (bi * k + kk) * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  return detail::make_result<T>(Shape{batch, m, n}, std::move(out), {&a, &b},
                                [batch, m, k, n](detail::Node<T>& self) {
    const T* ad = detail::parent_data(self, 0);
    const T* bd = detail::parent_data(self, 1);
    const T* gd = self.grad.data();
    T* ga = detail::parent_grad(self, 0);
    T* gb = detail::parent_grad(self, 1);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = gd + (bi * m + i) * n;
        const T* arow = ad + (bi * m + i) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const T* brow = bd + (bi * k + kk) * n;
          if (ga) {
            T acc{0};
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[(bi * m + i) * k + kk] += acc;
          }
          if (gb) {
            T* gbrow = gb + (bi * k + kk) * n;
            const T av = arow[kk];
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    }
  });
}

/// Applies weight[m, n] (plus optional bias[m]) along one axis of x, whose
/// extent must be n: out[.., i, ..] = sum_j weight[i, j] * x[.., j, ..] + bias[i].
/// This is the "linear map along the spatial / temporal / token axis" used
/// by the gating units.
template <typename T>
Tensor<T> linear_along(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                       long axis) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "linear_along");
  if (weight.rank() != 2 || weight.dim(1) != x.dim(ax)) {
    throw ShapeError("linear_along: weight " + to_string(weight.shape()) +
                     " does not act on axis " + std::to_string(ax) + " of " +
                     to_string(x.shape()));
  }
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != m)) {
    throw ShapeError("linear_along: bias " + to_string(bias->shape()) + " for output extent " +
                     std::to_string(m));
  }
  const detail::AxisView v(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = m;
  std::vector<T> out(v.outer * m * v.inner, T{0});
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < m; ++i) {
      T* orow = out.data() + (o * m + i) * v.inner;
      if (bias) {
        const T b = bias->data()[i];
        for (std::size_t q = 0; q < v.inner; ++q) orow[q] = b;
      }
      for (std::size_t j = 0; j < n; ++j) {
        const T w = wd[i * n + j];
        const T* xrow = xd + (o * n + j) * v.inner;
        for (std::size_t q = 0; q < v.inner; ++q) orow[q] += w * xrow[q];
      }
    }
  }
  auto backward = [v, m, n, has_bias = bias != nullptr](detail::Node<T>& self) {
    const T* xd = detail::parent_data(self, 0);
    const T* wd = detail::parent_data(self, 1);
    const T* gd = self.grad.data();
    T* gx = detail::parent_grad(self, 0);
    T* gw = detail::parent_grad(self, 1);
    T* gbias = has_bias ? detail::parent_grad(self, 2) : nullptr;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* grow = gd + (o * m + i) * v.inner;
        if (gbias) {
          T acc{0};
          for (std::size_t q = 0; q < v.inner; ++q) acc += grow[q];
          gbias[i] += acc;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const T* xrow = xd + (o * n + j) * v.inner;
          if (gw) {
            T acc{0};
            for (std::size_t q = 0; q < v.inner; ++q) acc += grow[q] * xrow[q];
            gw[i * n + j] += acc;
          }
          if (gx) {
            const T w = wd[i * n + j];
            T* gxrow = gx + (o * n + j) * v.inner;
            for (std::size_t q = 0; q < v.inner; ++q) gxrow[q] += w * grow[q];
          }
        }
      }
    }
  };
  if (bias) {
    return detail::make_result<T>(std::move(out_shape), std::move(out), {&x, &weight, bias},
                                  std::move(backward));
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x, &weight},
                                std::move(backward));
}

// ---------------------------------------------------------------------------
// Nonlinearities

/// Exact GELU, x * Phi(x) with the Gaussian CDF from erf.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440084436210484903928);
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xd[i];
    out[i] = v * T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    const T* xd = detail::parent_data(self, 0);
    constexpr T kInvSqrt2 = T(0.70710678118654752440084436210484903928);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * kInvSqrt2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = xd[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

/// Max-subtracted softmax along one axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, long axis) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "softmax");
  const detail::AxisView v(x.shape(), ax);
  std::vector<T> out(x.size());
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t q = 0; q < v.inner; ++q) {
      const std::size_t base = o * v.extent * v.inner + q;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < v.extent; ++j) mx = std::max(mx, xd[base + j * v.inner]);
      T total{0};
      for (std::size_t j = 0; j < v.extent; ++j) {
        const T e = std::exp(xd[base + j * v.inner] - mx);
        out[base + j * v.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < v.extent; ++j) out[base + j * v.inner] /= total;
    }
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [v](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    const T* y = self.data.data();
    const T* gy = self.grad.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t q = 0; q < v.inner; ++q) {
        const std::size_t base = o * v.extent * v.inner + q;
        T dot{0};
        for (std::size_t j = 0; j < v.extent; ++j) {
          dot += gy[base + j * v.inner] * y[base + j * v.inner];
        }
        for (std::size_t j = 0; j < v.extent; ++j) {
          const std::size_t idx = base + j * v.inner;
          g[idx] += y[idx] * (gy[idx] - dot);
        }
      }
    }
  });
}

/// Layer normalization over the last axis followed by an elementwise affine
/// map. eps is added to the variance inside the square root.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                     to_string(bias.shape()) + " do not match feature size " +
                     std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  std::vector<T> out(x.size());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* xd = x.data().data();
  const T* gd = gain.data().data();
  const T* bd = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xd + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gd[j] * h + bd[j];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [rows, d, xhat, inv_std](detail::Node<T>& self) {
        const T* gain_d = detail::parent_data(self, 1);
        const T* gy = self.grad.data();
        T* gx = detail::parent_grad(self, 0);
        T* ggain = detail::parent_grad(self, 1);
        T* gbias = detail::parent_grad(self, 2);
        const T* h = xhat->data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gyr = gy + r * d;
          const T* hr = h + r * d;
          if (ggain || gbias) {
            for (std::size_t j = 0; j < d; ++j) {
              if (ggain) ggain[j] += gyr[j] * hr[j];
              if (gbias) gbias[j] += gyr[j];
            }
          }
          if (gx) {
            T mean_dh{0}, mean_dh_h{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = gyr[j] * gain_d[j];
              mean_dh += dh;
              mean_dh_h += dh * hr[j];
            }
            mean_dh /= static_cast<T>(d);
            mean_dh_h /= static_cast<T>(d);
            const T is = (*inv_std)[r];
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = gyr[j] * gain_d[j];
              gx[r * d + j] += is * (dh - mean_dh - hr[j] * mean_dh_h);
            }
          }
        }
      });
}

/// Inverted dropout. Identity (same tensor) when not training or rate == 0.
/// The keep mask is a pure function of the generator's key, so replaying the
/// same key reproduces the same mask.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, const CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(x.size());
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T m = rng.uniform_at(i) >= rate ? keep_scale : T{0};
    (*mask)[i] = m;
    out[i] = xd[i] * m;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [mask](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (T v : x.data()) total += v;
  return detail::make_result<T>(Shape{}, std::vector<T>{total}, {&x}, [](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

/// Sum over one axis, removing it.
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, long axis) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "sum_axis");
  const detail::AxisView v(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(ax));
  std::vector<T> out(v.outer * v.inner, T{0});
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < v.extent; ++j) {
      const T* row = xd + (o * v.extent + j) * v.inner;
      T* orow = out.data() + o * v.inner;
      for (std::size_t q = 0; q < v.inner; ++q) orow[q] += row[q];
    }
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [v](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t j = 0; j < v.extent; ++j) {
        T* grow = g + (o * v.extent + j) * v.inner;
        const T* gy = self.grad.data() + o * v.inner;
        for (std::size_t q = 0; q < v.inner; ++q) grow[q] += gy[q];
      }
    }
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, long axis) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "mean_axis");
  return scale(sum_axis(x, axis), T(1) / static_cast<T>(x.dim(ax)));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {&x}, [](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// General axis permutation: output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  std::vector<bool> used(r, false);
  if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch");
  for (std::size_t p : perm) {
    if (p >= r || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
  }
  const Shape& in = x.shape();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[perm[i]];
    src_stride[i] = in_strides[perm[i]];
  }
  // gather index: out flat position -> in flat position
  auto index = std::make_shared<std::vector<std::size_t>>(x.size());
  std::vector<std::size_t> counter(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*index)[i] = src;
    for (std::size_t a = r; a-- > 0;) {
      if (++counter[a] < out_shape[a]) {
        src += src_stride[a];
        break;
      }
      src -= src_stride[a] * (out_shape[a] - 1);
      counter[a] = 0;
    }
  }
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[(*index)[i]];
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [index](detail::Node<T>& self) {
    if (T* g = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*index)[i]] += self.grad[i];
    }
  });
}

/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("transpose: need rank >= 2, got " + to_string(x.shape()));
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
  return permute(x, perm);
}

/// Inserts a new axis of extent `count` at position `axis`, repeating x.
template <typename T>
Tensor<T> repeat_axis(const Tensor<T>& x, std::size_t axis, std::size_t count) {
  if (axis > x.rank()) throw ShapeError("repeat_axis: axis out of range");
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + static_cast<long>(axis), count);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis; i < x.rank(); ++i) inner *= x.dim(i);
  std::vector<T> out(outer * count * inner);
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < count; ++c) {
      std::copy(xd + o * inner, xd + (o + 1) * inner, out.data() + (o * count + c) * inner);
    }
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [outer, count, inner](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t c = 0; c < count; ++c) {
        const T* gy = self.grad.data() + (o * count + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) g[o * inner + i] += gy[i];
      }
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = detail::normalize_axis(axis, parts[0].rank(), "concat");
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[ax] = b[ax] = 0;
    if (a != b) {
      throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " +
                       to_string(parts[0].shape()) + " along axis " + std::to_string(ax));
    }
    extents.push_back(p.dim(ax));
    out_shape[ax] += p.dim(ax);
  }
  const detail::AxisView v(out_shape, ax);
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const T* pd = parts[pi].data().data();
    const std::size_t block = extents[pi] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy(pd + o * block, pd + (o + 1) * block,
                out.data() + o * v.extent * v.inner + offset * v.inner);
    }
    offset += extents[pi];
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), parts,
                                [v, extents](detail::Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < extents.size(); ++pi) {
      const std::size_t block = extents[pi] * v.inner;
      if (T* g = detail::parent_grad(self, pi)) {
        for (std::size_t o = 0; o < v.outer; ++o) {
          const T* src = self.grad.data() + o * v.extent * v.inner + offset * v.inner;
          for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
        }
      }
      offset += extents[pi];
    }
  });
}

/// Sub-range [begin, end) along one axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, long axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "slice");
  if (begin > end || end > x.dim(ax)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside axis of extent " + std::to_string(x.dim(ax)));
  }
  const detail::AxisView v(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t block = (end - begin) * v.inner;
  std::vector<T> out(v.outer * block);
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const T* src = xd + o * v.extent * v.inner + begin * v.inner;
    std::copy(src, src + block, out.data() + o * block);
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [v, begin, block](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o) {
      T* dst = g + o * v.extent * v.inner + begin * v.inner;
      const T* src = self.grad.data() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

/// Splits along an axis into consecutive pieces of the given extents.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, long axis, const std::vector<std::size_t>& sizes) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "split");
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != x.dim(ax)) {
    throw ShapeError("split: piece sizes sum to " + std::to_string(total) + " but axis has " +
                     std::to_string(x.dim(ax)));
  }
  std::vector<Tensor<T>> pieces;
  std::size_t begin = 0;
  for (auto s : sizes) {
    pieces.push_back(slice(x, axis, begin, begin + s));
    begin += s;
  }
  return pieces;
}

// ---------------------------------------------------------------------------
// Losses

/// Batch-mean cross-entropy from logits[B, n] via log-sum-exp.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), n = logits.dim(1);
  if (batch == 0) throw DataError("cross_entropy: empty batch");
  auto probs = std::make_shared<std::vector<T>>(logits.size());
  auto targets = std::make_shared<std::vector<std::uint32_t>>(labels.begin(), labels.end());
  const T* ld = logits.data().data();
  T loss{0};
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= n) {
      throw DataError("cross_entropy: label " + std::to_string(labels[b]) + " outside [0, " +
                      std::to_string(n) + ")");
    }
    const T* row = ld + b * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) (*probs)[b * n + j] = std::exp(row[j] - lse);
    loss += lse - row[labels[b]];
  }
  loss /= static_cast<T>(batch);
  return detail::make_result<T>(Shape{}, std::vector<T>{loss}, {&logits},
                                [probs, targets, batch, n](detail::Node<T>& self) {
    T* g = detail::parent_grad(self, 0);
    if (!g) return;
    const T s = self.grad[0] / static_cast<T>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < n; ++j) {
        const T onehot = (*targets)[b] == j ? T{1} : T{0};
        g[b * n + j] += s * ((*probs)[b * n + j] - onehot);
      }
    }
  });
}

/// Elementwise cast between precisions, detached from any tape.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> out(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(out), x.requires_grad());
}

}  // namespace stamp
