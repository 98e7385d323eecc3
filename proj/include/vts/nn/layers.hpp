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

// Parameter-holding building blocks shared by the networks.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vts/nn/ops.hpp"

namespace vts::nn {

template <class T>
using NamedParams = std::vector<std::pair<std::string, Var<T>>>;
template <class T>
using NamedBuffers = std::vector<std::pair<std::string, Tensor<T>*>>;

template <class T>
Var<T> parameter(Shape s, T fill = T(0)) {
  return leaf(Tensor<T>(s, fill), true);
}

template <class T>
void init_normal(Var<T>& v, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& x : v.mutable_value().data) x = static_cast<T>(nd(rng));
}

template <class T>
void init_he(Var<T>& v, int64_t fan_in, std::mt19937_64& rng) {
  init_normal(v, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

// Dense or transposed 3D convolution with bias.
template <class T>
struct ConvLayer {
  Var<T> weight, bias;
  ConvGeom geom;
  bool transposed = false;

  ConvLayer() = default;
  ConvLayer(int64_t cin, int64_t cout, ConvGeom g, bool transpose = false) : geom(g), transposed(transpose) {
    const int64_t k = g.kernel;
    weight = parameter<T>(transpose ? Shape{cin, cout, k, k, k} : Shape{cout, cin, k, k, k});
    bias = parameter<T>(Shape{1, cout, 1, 1, 1});
  }

  int64_t in_channels() const { return transposed ? weight.shape().n : weight.shape().c; }
  int64_t out_channels() const { return transposed ? weight.shape().c : weight.shape().n; }

  Var<T> operator()(const Var<T>& x) const {
    return transposed ? conv_transpose3d(x, weight, bias, geom) : conv3d(x, weight, bias, geom);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <class T>
struct BatchNormLayer {
  Var<T> gamma, beta;
  std::shared_ptr<RunningStats<T>> stats;
  double momentum = 0.1, eps = 1e-5;

  BatchNormLayer() = default;
  explicit BatchNormLayer(int64_t channels)
      : gamma(parameter<T>(Shape{1, channels, 1, 1, 1}, T(1))),
        beta(parameter<T>(Shape{1, channels, 1, 1, 1})),
        stats(std::make_shared<RunningStats<T>>(channels)) {}

  Var<T> operator()(const Var<T>& x, bool training) const {
    return batch_norm(x, gamma, beta, *stats, training, momentum, eps);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
  void collect_buffers(const std::string& prefix, NamedBuffers<T>& out) const {
    out.emplace_back(prefix + ".running_mean", &stats->mean);
    out.emplace_back(prefix + ".running_var", &stats->var);
  }
};

template <class T>
struct LinearLayer {
  Var<T> weight, bias;

  LinearLayer() = default;
  LinearLayer(int64_t in, int64_t out)
      : weight(parameter<T>(Shape{out, in, 1, 1, 1})), bias(parameter<T>(Shape{1, out, 1, 1, 1})) {}

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }

  void collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Self-attention block with C/8 query/key width and a zero-initialized gate.
template <class T>
struct AttentionLayer {
  AttentionWeights<T> w;

  AttentionLayer() = default;
  explicit AttentionLayer(int64_t channels) {
    const int64_t cr = std::max<int64_t>(1, channels / 8);
    w.wq = parameter<T>(Shape{cr, channels, 1, 1, 1});
    w.bq = parameter<T>(Shape{1, cr, 1, 1, 1});
    w.wk = parameter<T>(Shape{cr, channels, 1, 1, 1});
    w.bk = parameter<T>(Shape{1, cr, 1, 1, 1});
    w.wv = parameter<T>(Shape{channels, channels, 1, 1, 1});
    w.bv = parameter<T>(Shape{1, channels, 1, 1, 1});
    w.gamma = parameter<T>(Shape{});
  }

  Var<T> operator()(const Var<T>& x) const { return self_attention(x, w); }

  void collect(const std::string& prefix, NamedParams<T>& out) const {
    out.emplace_back(prefix + ".query.weight", w.wq);
    out.emplace_back(prefix + ".query.bias", w.bq);
    out.emplace_back(prefix + ".key.weight", w.wk);
    out.emplace_back(prefix + ".key.bias", w.bk);
    out.emplace_back(prefix + ".value.weight", w.wv);
    out.emplace_back(prefix + ".value.bias", w.bv);
    out.emplace_back(prefix + ".gamma", w.gamma);
  }
};

template <class T>
int64_t parameter_count(const NamedParams<T>& ps) {
  int64_t n = 0;
  for (const auto& [name, v] : ps) n += v.value().size();
  return n;
}

}  // namespace vts::nn
