// Copyright 2026 The VTS Authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vts/nn/layers.hpp"

namespace vts::nn {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(NamedParams<T> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0)) throw UsageError("learning rate must be positive");
    for (const auto& [name, v] : params_) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  const AdamConfig& config() const { return cfg_; }
  int64_t steps() const { return t_; }
  void set_steps(int64_t t) { t_ = t; }
  const NamedParams<T>& params() const { return params_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

  void zero_grad() {
    for (auto& [name, v] : params_) const_cast<Var<T>&>(v).zero_grad();
  }

  // Parameters without an accumulated gradient are left untouched but still
  // share the step counter.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    for (size_t k = 0; k < params_.size(); ++k) {
      auto& p = const_cast<Var<T>&>(params_[k].second);
      if (!p.has_grad()) continue;
      const Tensor<T>& g = p.grad();
      Tensor<T>& w = p.mutable_value();
      T* m = m_[k].ptr();
      T* v = v_[k].ptr();
      for (int64_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = static_cast<T>(b1 * m[i] + (1 - b1) * gi);
        v[i] = static_cast<T>(b2 * v[i] + (1 - b2) * gi * gi);
        const double mh = m[i] / c1, vh = v[i] / c2;
        w[i] = static_cast<T>(w[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

 private:
  NamedParams<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace vts::nn
