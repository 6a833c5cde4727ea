// selkd/gradcheck.hpp

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

// Central finite-difference gradient oracle.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "selkd/tensor.hpp"

namespace selkd {

inline constexpr double kGradCheckFloor = 1e-8;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

inline double grad_rel_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares the autodiff gradient of `f` at `x` against (f(x+h)-f(x-h))/2h
/// for every element of x.
inline GradCheckResult finite_diff_check(
    const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: h must be positive");
  Tensor leaf = Tensor(x.shape(), {x.values().begin(), x.values().end()}, true);
  Tensor loss = f(leaf);
  std::vector<double> analytic(x.size(), 0.0);
  if (loss.requires_grad()) {
    backward(loss);
    if (leaf.has_grad()) {
      std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    }
  }
  GradCheckResult res;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto plus = base;
    auto minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor(x.shape(), std::move(plus))).item();
    const double fm = f(Tensor(x.shape(), std::move(minus))).item();
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = grad_rel_error(analytic[i], numeric);
    ++res.checked;
    if (err >= res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = i;
      res.analytic = analytic[i];
      res.numeric = numeric;
    }
  }
  return res;
}

/// Checks gradients of a closure-computed scalar loss with respect to a set of
/// parameter tensors, perturbing them in place. With `max_per_param` > 0 only
/// that many entries per tensor are probed, chosen by `rng`.
inline GradCheckResult finite_diff_check_params(
    const std::function<Tensor()>& loss_fn, ParamList& params, double h,
    std::size_t max_per_param = 0, Rng* rng = nullptr) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: h must be positive");
  zero_grads(params);
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    analytic.emplace_back(p.tensor.size(), 0.0);
    if (p.tensor.has_grad()) {
      std::copy(p.tensor.grad().begin(), p.tensor.grad().end(),
                analytic.back().begin());
    }
  }
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].tensor.mutable_values();
    std::vector<std::size_t> idx;
    if (max_per_param == 0 || max_per_param >= vals.size() || !rng) {
      for (std::size_t i = 0; i < vals.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < max_per_param; ++k)
        idx.push_back(rng->below(vals.size()));
    }
    for (std::size_t i : idx) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = loss_fn().item();
      vals[i] = orig - h;
      const double fm = loss_fn().item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err = grad_rel_error(analytic[pi][i], numeric);
      ++res.checked;
      if (err >= res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = params[pi].name;
        res.worst_index = i;
        res.analytic = analytic[pi][i];
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace selkd
