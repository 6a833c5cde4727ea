// selkd/ops.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Differentiable operations. Every op treats its input as a stack of rows
// over the last dimension unless noted otherwise.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "selkd/tensor.hpp"

namespace selkd {

namespace detail {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
  }
}

inline Shape leading(const Tensor& t) {
  Shape s = t.shape();
  if (!s.empty()) s.pop_back();
  if (s.empty()) s.push_back(1);
  return s;
}
}  // namespace detail

/// [..., k] x [k, n] -> [..., n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.rank() < 1 || a.cols() != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t k = a.cols();
  const std::size_t m = a.rows();
  const std::size_t n = b.shape()[1];
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n, 0.0);
  if (k > 0) {
    detail::MutMap c(out.data(), m, n);
    c.noalias() = detail::ConstMap(a.values().data(), m, k) *
                  detail::ConstMap(b.values().data(), k, n);
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {&a, &b},
      [m, k, n](const detail::Node& o) {
        auto& an = *o.inputs[0];
        auto& bn = *o.inputs[1];
        detail::ConstMap g(o.grad.data(), m, n);
        if (an.requires_grad) {
          detail::MutMap ga(an.ensure_grad(), m, k);
          ga.noalias() += g * detail::ConstMap(bn.value.data(), k, n).transpose();
        }
        if (bn.requires_grad) {
          detail::MutMap gb(bn.ensure_grad(), k, n);
          gb.noalias() += detail::ConstMap(an.value.data(), m, k).transpose() * g;
        }
      });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_result(a.shape(), std::move(out), {&a, &b},
                             [](const detail::Node& o) {
                               for (int s = 0; s < 2; ++s) {
                                 auto& in = *o.inputs[s];
                                 if (!in.requires_grad) continue;
                                 double* g = in.ensure_grad();
                                 for (std::size_t i = 0; i < o.grad.size(); ++i)
                                   g[i] += o.grad[i];
                               }
                             });
}

/// x[..., n] + bias[n], broadcast over rows.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  return detail::make_result(
      x.shape(), std::move(out), {&x, &bias},
      [rows, n](const detail::Node& o) {
        auto& xn = *o.inputs[0];
        auto& bn = *o.inputs[1];
        if (xn.requires_grad) {
          double* g = xn.ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        }
        if (bn.requires_grad) {
          double* g = bn.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) g[c] += o.grad[r * n + c];
        }
      });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result(a.shape(), std::move(out), {&a, &b},
                             [](const detail::Node& o) {
                               auto& an = *o.inputs[0];
                               auto& bn = *o.inputs[1];
                               if (an.requires_grad) {
                                 double* g = an.ensure_grad();
                                 for (std::size_t i = 0; i < o.grad.size(); ++i)
                                   g[i] += o.grad[i] * bn.value[i];
                               }
                               if (bn.requires_grad) {
                                 double* g = bn.ensure_grad();
                                 for (std::size_t i = 0; i < o.grad.size(); ++i)
                                   g[i] += o.grad[i] * an.value[i];
                               }
                             });
}

inline Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= s;
  return detail::make_result(x.shape(), std::move(out), {&x},
                             [s](const detail::Node& o) {
                               double* g = o.inputs[0]->ensure_grad();
                               for (std::size_t i = 0; i < o.grad.size(); ++i)
                                 g[i] += s * o.grad[i];
                             });
}

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return detail::make_result(x.shape(), std::move(out), {&x},
                             [](const detail::Node& o) {
                               auto& in = *o.inputs[0];
                               double* g = in.ensure_grad();
                               for (std::size_t i = 0; i < o.grad.size(); ++i)
                                 if (in.value[i] > 0.0) g[i] += o.grad[i];
                             });
}

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return detail::make_result({1}, {total}, {&x}, [](const detail::Node& o) {
    auto& in = *o.inputs[0];
    double* g = in.ensure_grad();
    for (std::size_t i = 0; i < in.value.size(); ++i) g[i] += o.grad[0];
  });
}

/// Σ_i w_i x_i with constant weights.
inline Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) +
                         " weights for tensor " + shape_str(x.shape()));
  }
  double total = 0.0;
  const auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) total += weights[i] * xv[i];
  return detail::make_result(
      {1}, {total}, {&x},
      [w = std::vector<double>(weights.begin(), weights.end())](
          const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += w[i] * o.grad[0];
      });
}

/// Row-wise log-probabilities with max-subtraction.
inline Tensor log_softmax(const Tensor& x) {
  const std::size_t n = x.cols();
  if (x.rank() == 0 || n == 0) {
    throw DimensionError("log_softmax: empty last dimension in " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mx = row[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = row[c] - lse;
  }
  return detail::make_result(
      x.shape(), std::move(out), {&x}, [rows, n](const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = o.grad.data() + r * n;
          const double* lp = o.value.data() + r * n;
          double gs = 0.0;
          for (std::size_t c = 0; c < n; ++c) gs += go[c];
          for (std::size_t c = 0; c < n; ++c)
            g[r * n + c] += go[c] - std::exp(lp[c]) * gs;
        }
      });
}

/// Plain (non-differentiable) row softmax of a value buffer.
inline std::vector<double> softmax_rows(std::span<const double> x,
                                        std::size_t n) {
  std::vector<double> out(x.size());
  const std::size_t rows = n ? x.size() / n : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * n;
    double mx = row[0];
    for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = std::exp(row[c] - mx);
      s += out[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= s;
  }
  return out;
}

/// Per-row normalization to zero mean / unit variance, then gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (d == 0 || gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) +
                         " with gain " + shape_str(gain.shape()) +
                         " and bias " + shape_str(bias.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.rows();
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mean) * inv;
      xhat[r * d + c] = h;
      out[r * d + c] = h * gv[c] + bv[c];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [rows, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const detail::Node& o) {
        auto& xn = *o.inputs[0];
        auto& gn = *o.inputs[1];
        auto& bn = *o.inputs[2];
        if (gn.requires_grad) {
          double* g = gn.ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            g[i % d] += o.grad[i] * xhat[i];
        }
        if (bn.requires_grad) {
          double* g = bn.ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % d] += o.grad[i];
        }
        if (xn.requires_grad) {
          double* g = xn.ensure_grad();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = o.grad[r * d + c] * gn.value[c];
              m1 += dh;
              m2 += dh * xhat[r * d + c];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t c = 0; c < d; ++c) {
              const double dh = o.grad[r * d + c] * gn.value[c];
              g[r * d + c] += inv_std[r] * (dh - m1 - xhat[r * d + c] * m2);
            }
          }
        }
      });
}

/// Gathers table rows. Output shape is `index_shape` with the embedding
/// width appended. Backward scatters additively into the table.
inline Tensor embedding_lookup(const Tensor& table,
                               std::span<const std::int32_t> ids,
                               Shape index_shape) {
  if (table.rank() != 2) {
    throw DimensionError("embedding_lookup: table must be rank 2, got " +
                         shape_str(table.shape()));
  }
  if (shape_size(index_shape) != ids.size()) {
    throw DimensionError("embedding_lookup: index shape " +
                         shape_str(index_shape) + " for " +
                         std::to_string(ids.size()) + " ids");
  }
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  const auto tv = table.values();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  index_shape.push_back(d);
  return detail::make_result(
      std::move(index_shape), std::move(out), {&table},
      [d, idx = std::vector<std::int32_t>(ids.begin(), ids.end())](
          const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* row = g + static_cast<std::size_t>(idx[i]) * d;
          for (std::size_t c = 0; c < d; ++c) row[c] += o.grad[i * d + c];
        }
      });
}

/// Inverted dropout: kept units are scaled by 1/(1-rate).
inline Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must be in [0, 1)");
  }
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> factor(x.size());
  for (auto& f : factor) f = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor[i];
  return detail::make_result(
      x.shape(), std::move(out), {&x},
      [factor = std::move(factor)](const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t i = 0; i < factor.size(); ++i)
          g[i] += o.grad[i] * factor[i];
      });
}

/// out[r] = x[r, ids[r]] on valid rows, 0 elsewhere.
inline Tensor pick(const Tensor& x, std::span<const std::int32_t> ids,
                   std::span<const std::uint8_t> valid) {
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  if (ids.size() != rows || valid.size() != rows) {
    throw DimensionError("pick: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<double> out(rows, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid[r]) continue;
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= n) {
      throw IndexError("pick: target id " + std::to_string(ids[r]) +
                       " at row " + std::to_string(r) + " outside [0, " +
                       std::to_string(n) + ")");
    }
    out[r] = xv[r * n + static_cast<std::size_t>(ids[r])];
  }
  return detail::make_result(
      detail::leading(x), std::move(out), {&x},
      [n, idx = std::vector<std::int32_t>(ids.begin(), ids.end()),
       ok = std::vector<std::uint8_t>(valid.begin(), valid.end())](
          const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t r = 0; r < idx.size(); ++r)
          if (ok[r]) g[r * n + static_cast<std::size_t>(idx[r])] += o.grad[r];
      });
}

/// out[r] = Σ_c x[r, c] * w[r, c] with constant weights.
inline Tensor row_dot(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.size()) {
    throw DimensionError("row_dot: weights do not match " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  const auto xv = x.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c)
      out[r] += xv[r * n + c] * weights[r * n + c];
  return detail::make_result(
      detail::leading(x), std::move(out), {&x},
      [n, w = std::vector<double>(weights.begin(), weights.end())](
          const detail::Node& o) {
        double* g = o.inputs[0]->ensure_grad();
        for (std::size_t r = 0; r < o.grad.size(); ++r)
          for (std::size_t c = 0; c < n; ++c)
            g[r * n + c] += o.grad[r] * w[r * n + c];
      });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " +
                         shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return detail::make_result(std::move(shape), std::move(out), {&x},
                             [](const detail::Node& o) {
                               double* g = o.inputs[0]->ensure_grad();
                               for (std::size_t i = 0; i < o.grad.size(); ++i)
                                 g[i] += o.grad[i];
                             });
}

struct AttentionSpec {
  std::size_t batch = 0;
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::size_t heads = 1;
  Mask q_valid;  // [batch x q_len]
  Mask k_valid;  // [batch x k_len]
  bool causal = false;
};

/// Scaled dot-product multi-head attention over already-projected inputs.
/// q: [batch*q_len x d], k and v: [batch*k_len x d]. Padded queries produce
/// zero rows; padded keys receive zero weight; with `causal`, query i sees
/// keys j <= i only.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionSpec& spec) {
  const std::size_t d = q.cols();
  const std::size_t B = spec.batch, Lq = spec.q_len, Lk = spec.k_len,
                    H = spec.heads;
  if (H == 0 || d % H != 0 || k.cols() != d || v.cols() != d ||
      q.rows() != B * Lq || k.rows() != B * Lk || v.rows() != B * Lk ||
      spec.q_valid.rows() != B || spec.q_valid.cols() != Lq ||
      spec.k_valid.rows() != B || spec.k_valid.cols() != Lk) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()) +
                         " inconsistent with batch/len/heads");
  }
  const std::size_t dh = d / H;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  std::vector<double> probs(B * H * Lq * Lk, 0.0);
  std::vector<double> out(B * Lq * d, 0.0);
  std::vector<double> scores(Lk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        if (!spec.q_valid(b, i)) continue;
        const double* qi = qv.data() + (b * Lq + i) * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < Lk; ++j) {
          const bool visible =
              spec.k_valid(b, j) && (!spec.causal || j <= i);
          if (!visible) continue;
          const double* kj = kv.data() + (b * Lk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * sc;
          mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        double* p = probs.data() + ((b * H + h) * Lq + i) * Lk;
        double z = 0.0;
        for (std::size_t j = 0; j < Lk; ++j) {
          const bool visible =
              spec.k_valid(b, j) && (!spec.causal || j <= i);
          if (!visible) continue;
          p[j] = std::exp(scores[j] - mx);
          z += p[j];
        }
        double* oi = out.data() + (b * Lq + i) * d + h * dh;
        for (std::size_t j = 0; j < Lk; ++j) {
          if (p[j] == 0.0) continue;
          p[j] /= z;
          const double* vj = vv.data() + (b * Lk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  return detail::make_result(
      q.shape(), std::move(out), {&q, &k, &v},
      [B, Lq, Lk, H, d, dh, sc, probs = std::move(probs)](
          const detail::Node& o) {
        auto& qn = *o.inputs[0];
        auto& kn = *o.inputs[1];
        auto& vn = *o.inputs[2];
        double* gq = qn.requires_grad ? qn.ensure_grad() : nullptr;
        double* gk = kn.requires_grad ? kn.ensure_grad() : nullptr;
        double* gv = vn.requires_grad ? vn.ensure_grad() : nullptr;
        std::vector<double> dp(Lk);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < Lq; ++i) {
              const double* p = probs.data() + ((b * H + h) * Lq + i) * Lk;
              const double* go = o.grad.data() + (b * Lq + i) * d + h * dh;
              double weighted = 0.0;
              for (std::size_t j = 0; j < Lk; ++j) {
                if (p[j] == 0.0) {
                  dp[j] = 0.0;
                  continue;
                }
                const double* vj = vn.value.data() + (b * Lk + j) * d + h * dh;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
                dp[j] = s;
                weighted += p[j] * s;
                if (gv) {
                  double* gvj = gv + (b * Lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * go[c];
                }
              }
              const double* qi = qn.value.data() + (b * Lq + i) * d + h * dh;
              for (std::size_t j = 0; j < Lk; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - weighted) * sc;
                const double* kj = kn.value.data() + (b * Lk + j) * d + h * dh;
                if (gq) {
                  double* gqi = gq + (b * Lq + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  double* gkj = gk + (b * Lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

}  // namespace selkd
