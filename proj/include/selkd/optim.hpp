// selkd/optim.hpp

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

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "selkd/tensor.hpp"

namespace selkd {

/// Inverse-square-root schedule with linear warmup, peaking at `peak_lr`
/// after `warmup_steps` updates. warmup_steps == 0 gives a constant rate.
struct LrSchedule {
  double peak_lr = 7e-4;
  std::size_t warmup_steps = 400;

  double at(std::size_t step) const {
    if (step == 0) step = 1;
    if (warmup_steps == 0) return peak_lr;
    const double t = static_cast<double>(step);
    const double w = static_cast<double>(warmup_steps);
    return peak_lr * std::min(t / w, std::sqrt(w / t));
  }
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  LrSchedule schedule;
};

inline AdamState make_adam(const ParamList& params, LrSchedule schedule = {},
                           double beta1 = 0.9, double beta2 = 0.98,
                           double eps = 1e-9) {
  AdamState st;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.eps = eps;
  st.schedule = schedule;
  for (const auto& p : params) {
    st.m.emplace_back(p.tensor.size(), 0.0);
    st.v.emplace_back(p.tensor.size(), 0.0);
  }
  return st;
}

/// One bias-corrected Adam update using the gradients held by `params`.
/// Parameters without a gradient buffer are treated as having zero gradient.
inline void adam_step(ParamList& params, AdamState& st) {
  if (st.m.size() != params.size() || st.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state holds " +
                        std::to_string(st.m.size()) + " blocks for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params[i].tensor;
    if (st.m[i].size() != t.size() || st.v[i].size() != t.size()) {
      throw ContractError("adam_step: state size mismatch for " +
                          params[i].name);
    }
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("adam_step: non-finite gradient in parameter " +
                             params[i].name);
      }
    }
  }
  st.step += 1;
  const double t = static_cast<double>(st.step);
  const double lr = st.schedule.at(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params[i].tensor;
    const auto grad = tensor.grad();
    auto val = tensor.mutable_values();
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g;
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      val[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace selkd
