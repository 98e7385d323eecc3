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

// Generator, discriminator and baseline networks.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vts/error.hpp"
#include "vts/nn/layers.hpp"

namespace vts {

using nn::Shape;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Specs

struct GeneratorSpec {
  int base_channels = 64;
  int levels = 4;
  int kernel = 4;
  int final_kernel = 3;
  int max_channels = 512;
  double leaky_slope = 0.2;
  bool batch_norm = true;
  bool residual = true;  // false: direct prediction (the HF ablation)

  int64_t divisor() const { return int64_t{1} << levels; }
  // Encoder output channels at level i >= 1; level 0 is the decoder head width.
  int64_t channels(int i) const {
    if (i == 0) return base_channels;
    return std::min<int64_t>(int64_t{base_channels} << (i - 1), max_channels);
  }
  void validate() const {
    if (base_channels < 1 || levels < 1 || kernel < 2 || final_kernel < 1 || final_kernel % 2 == 0 || max_channels < 1)
      throw UsageError("invalid generator spec");
  }
};

struct DiscriminatorSpec {
  int base_channels = 64;
  int levels = 6;
  int kernel = 4;
  int max_channels = 512;
  int condition_channels = 8;
  int attention_layer = 4;  // 0 disables attention
  double leaky_slope = 0.2;
  bool batch_norm = true;
  bool zero_condition = false;  // condition channels present but zeroed

  int64_t input_channels() const { return 2 + condition_channels; }
  int64_t channels(int layer) const {
    return std::min<int64_t>(int64_t{base_channels} << (layer - 1), max_channels);
  }
  void validate() const {
    if (base_channels < 1 || levels < 1 || kernel < 2 || condition_channels < 0 || attention_layer < 0 ||
        attention_layer > levels)
      throw UsageError("invalid discriminator spec");
  }
};

struct Pix2PixSpec {
  int base_channels = 64;
  int levels = 6;
  int kernel = 4;
  int max_channels = 512;
  double leaky_slope = 0.2;

  int64_t divisor() const { return int64_t{1} << levels; }
  int64_t channels(int i) const { return std::min<int64_t>(int64_t{base_channels} << (i - 1), max_channels); }
  void validate() const {
    if (base_channels < 1 || levels < 2 || kernel < 2) throw UsageError("invalid pix2pix spec");
  }
};

struct SrcnnSpec {
  int channels1 = 64;
  int channels2 = 32;
  int kernel1 = 9, kernel2 = 1, kernel3 = 5;

  void validate() const {
    for (int k : {kernel1, kernel2, kernel3})
      if (k < 1 || k % 2 == 0) throw UsageError("srcnn kernels must be odd");
    if (channels1 < 1 || channels2 < 1) throw UsageError("invalid srcnn spec");
  }
};

inline void to_json(nlohmann::json& j, const GeneratorSpec& s) {
  j = {{"base_channels", s.base_channels}, {"levels", s.levels},           {"kernel", s.kernel},
       {"final_kernel", s.final_kernel},   {"max_channels", s.max_channels}, {"leaky_slope", s.leaky_slope},
       {"batch_norm", s.batch_norm},       {"residual", s.residual}};
}
inline void from_json(const nlohmann::json& j, GeneratorSpec& s) {
  GeneratorSpec d;
  s.base_channels = j.value("base_channels", d.base_channels);
  s.levels = j.value("levels", d.levels);
  s.kernel = j.value("kernel", d.kernel);
  s.final_kernel = j.value("final_kernel", d.final_kernel);
  s.max_channels = j.value("max_channels", d.max_channels);
  s.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  s.batch_norm = j.value("batch_norm", d.batch_norm);
  s.residual = j.value("residual", d.residual);
}
inline void to_json(nlohmann::json& j, const DiscriminatorSpec& s) {
  j = {{"base_channels", s.base_channels},
       {"levels", s.levels},
       {"kernel", s.kernel},
       {"max_channels", s.max_channels},
       {"condition_channels", s.condition_channels},
       {"attention_layer", s.attention_layer},
       {"leaky_slope", s.leaky_slope},
       {"batch_norm", s.batch_norm},
       {"zero_condition", s.zero_condition}};
}
inline void from_json(const nlohmann::json& j, DiscriminatorSpec& s) {
  DiscriminatorSpec d;
  s.base_channels = j.value("base_channels", d.base_channels);
  s.levels = j.value("levels", d.levels);
  s.kernel = j.value("kernel", d.kernel);
  s.max_channels = j.value("max_channels", d.max_channels);
  s.condition_channels = j.value("condition_channels", d.condition_channels);
  s.attention_layer = j.value("attention_layer", d.attention_layer);
  s.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  s.batch_norm = j.value("batch_norm", d.batch_norm);
  s.zero_condition = j.value("zero_condition", d.zero_condition);
}
inline void to_json(nlohmann::json& j, const Pix2PixSpec& s) {
  j = {{"base_channels", s.base_channels},
       {"levels", s.levels},
       {"kernel", s.kernel},
       {"max_channels", s.max_channels},
       {"leaky_slope", s.leaky_slope}};
}
inline void from_json(const nlohmann::json& j, Pix2PixSpec& s) {
  Pix2PixSpec d;
  s.base_channels = j.value("base_channels", d.base_channels);
  s.levels = j.value("levels", d.levels);
  s.kernel = j.value("kernel", d.kernel);
  s.max_channels = j.value("max_channels", d.max_channels);
  s.leaky_slope = j.value("leaky_slope", d.leaky_slope);
}
inline void to_json(nlohmann::json& j, const SrcnnSpec& s) {
  j = {{"channels1", s.channels1}, {"channels2", s.channels2}, {"kernels", {s.kernel1, s.kernel2, s.kernel3}}};
}
inline void from_json(const nlohmann::json& j, SrcnnSpec& s) {
  SrcnnSpec d;
  s.channels1 = j.value("channels1", d.channels1);
  s.channels2 = j.value("channels2", d.channels2);
  if (j.contains("kernels")) {
    s.kernel1 = j["kernels"].at(0);
    s.kernel2 = j["kernels"].at(1);
    s.kernel3 = j["kernels"].at(2);
  }
}

// ---------------------------------------------------------------------------
// Receptive field by interval composition along one axis. An output index j of
// a map at `scale` depends on input indices [j * scale + lo, j * scale + hi].

struct Reach {
  double scale = 1, lo = 0, hi = 0;

  Reach conv(int kernel, int stride, int pad_lo) const {
    return {scale * stride, lo - pad_lo * scale, hi + (kernel - 1 - pad_lo) * scale};
  }
  Reach conv_transpose(int kernel, int stride, int pad_lo) const {
    const double s = scale / stride;
    return {s, lo + (pad_lo - kernel + 1) * s, hi + pad_lo * s};
  }
  // Half-pixel linear upsampling by two.
  Reach upsample2() const { return {scale / 2, lo - scale, hi + scale / 2}; }
  Reach join(const Reach& o) const { return {scale, std::min(lo, o.lo), std::max(hi, o.hi)}; }
  int64_t radius() const { return static_cast<int64_t>(std::ceil(std::max(-lo, hi) - 1e-9)); }
};

inline int64_t receptive_field(const GeneratorSpec& s) {
  const Reach in;
  std::vector<Reach> skips{in};
  Reach r = in;
  for (int i = 1; i <= s.levels; ++i) skips.push_back(r = r.conv(s.kernel, 2, 1));
  for (int i = s.levels - 1; i >= 0; --i) r = r.upsample2().join(skips[static_cast<size_t>(i)]).conv(s.kernel, 1, (s.kernel - 1) / 2);
  r = r.conv(s.final_kernel, 1, s.final_kernel / 2);
  if (s.residual) r = r.join(in);
  return r.radius();
}

inline int64_t receptive_field(const DiscriminatorSpec& s) {
  Reach r;
  for (int i = 1; i <= s.levels; ++i) r = r.conv(s.kernel, 2, 1);
  return r.radius();
}

inline int64_t receptive_field(const Pix2PixSpec& s) {
  std::vector<Reach> downs;
  Reach r;
  for (int i = 1; i <= s.levels; ++i) downs.push_back(r = r.conv(s.kernel, 2, 1));
  for (int i = s.levels; i >= 1; --i) {
    if (i < s.levels) r = r.join(downs[static_cast<size_t>(i - 1)]);
    r = r.conv_transpose(s.kernel, 2, 1);
  }
  return r.radius();
}

inline int64_t receptive_field(const SrcnnSpec& s) {
  return Reach{}.conv(s.kernel1, 1, s.kernel1 / 2).conv(s.kernel2, 1, s.kernel2 / 2).conv(s.kernel3, 1, s.kernel3 / 2).radius();
}

// ---------------------------------------------------------------------------
// Introspection

struct LayerInfo {
  std::string name;
  std::string op;
  int64_t in_channels = 0, out_channels = 0;
  int kernel = 0, stride = 0;
  double slope = 0;
  int64_t out_size = 0;  // spatial edge of the produced map
  std::string detail;

  bool operator==(const LayerInfo&) const = default;
};

namespace detail {

class Tracer {
 public:
  void enable(std::vector<LayerInfo>* sink) { sink_ = sink; }
  template <class T>
  const Var<T>& note(const Var<T>& v, LayerInfo info) const {
    if (sink_) {
      info.out_channels = v.shape().c;
      info.out_size = v.shape().d;
      sink_->push_back(std::move(info));
    }
    return v;
  }

 private:
  std::vector<LayerInfo>* sink_ = nullptr;
};

inline std::mt19937_64 init_rng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline void require_divisible(const Shape& s, int64_t divisor, const std::string& what) {
  for (int64_t v : {s.d, s.h, s.w})
    if (v % divisor != 0)
      throw UsageError(what + " input " + s.str() + ": every spatial dim must be divisible by " +
                       std::to_string(divisor));
}

}  // namespace detail

// Common interface of the image-to-image networks (generators and SRCNN).
template <class T>
class ImageNet {
 public:
  virtual ~ImageNet() = default;
  virtual std::string kind() const = 0;
  virtual nlohmann::json spec_json() const = 0;
  virtual Var<T> forward(const Var<T>& x) = 0;
  virtual int64_t divisor() const = 0;
  virtual int64_t receptive_radius() const = 0;
  virtual nn::NamedParams<T> params() const = 0;
  virtual nn::NamedBuffers<T> buffers() const { return {}; }
  virtual void init(uint64_t seed) = 0;

  void set_training(bool t) { training_ = t; }
  bool training() const { return training_; }

  // Layer sequence of one forward pass at a cubic input of edge `size`.
  std::vector<LayerInfo> describe(int64_t size) {
    std::vector<LayerInfo> out;
    nn::NoGradGuard ng;
    const bool was = training_;
    training_ = false;
    tracer_.enable(&out);
    try {
      forward(nn::leaf(Tensor<T>(Shape{1, 1, size, size, size})));
    } catch (...) {
      tracer_.enable(nullptr);
      training_ = was;
      throw;
    }
    tracer_.enable(nullptr);
    training_ = was;
    return out;
  }

  // Runs the network on a single-channel (1, 1, D, H, W) tensor without building a tape.
  Tensor<T> predict(const Tensor<T>& x) {
    nn::NoGradGuard ng;
    return forward(nn::leaf(x)).value();
  }

 protected:
  bool training_ = true;
  detail::Tracer tracer_;
};

// ---------------------------------------------------------------------------
// Generator: residual U-Net with strided-conv encoder and trilinear decoder.

template <class T>
class Generator final : public ImageNet<T> {
 public:
  explicit Generator(GeneratorSpec spec = {}) : spec_(spec) {
    spec_.validate();
    const nn::ConvGeom down{spec_.kernel, 2, 1, 1};
    for (int i = 1; i <= spec_.levels; ++i) {
      enc_.emplace_back(i == 1 ? 1 : spec_.channels(i - 1), spec_.channels(i), down);
      if (spec_.batch_norm) enc_bn_.emplace_back(spec_.channels(i));
    }
    const int plo = (spec_.kernel - 1) / 2;
    const nn::ConvGeom same{spec_.kernel, 1, plo, spec_.kernel - 1 - plo};
    for (int i = spec_.levels - 1; i >= 0; --i) {
      const int64_t from_below = i == spec_.levels - 1 ? spec_.channels(spec_.levels) : spec_.channels(i + 1);
      const int64_t skip = i == 0 ? 1 : spec_.channels(i);
      dec_.emplace_back(from_below + skip, spec_.channels(i), same);
      if (spec_.batch_norm) dec_bn_.emplace_back(spec_.channels(i));
    }
    const int fk = spec_.final_kernel;
    final_ = nn::ConvLayer<T>(spec_.channels(0), 1, nn::ConvGeom{fk, 1, fk / 2, fk / 2});
    init(0);
  }

  const GeneratorSpec& spec() const { return spec_; }
  std::string kind() const override { return spec_.residual ? "generator" : "generator-direct"; }
  nlohmann::json spec_json() const override { return spec_; }
  int64_t divisor() const override { return spec_.divisor(); }
  int64_t receptive_radius() const override { return receptive_field(spec_); }
  nn::ConvLayer<T>& final_layer() { return final_; }

  void init(uint64_t seed) override {
    auto rng = detail::init_rng(seed, 1);
    for (auto* layers : {&enc_, &dec_})
      for (auto& c : *layers) {
        nn::init_normal(c.weight, 0.02, rng);
        c.bias.mutable_value().fill(T(0));
      }
    for (auto* bns : {&enc_bn_, &dec_bn_})
      for (auto& b : *bns) {
        b.gamma.mutable_value().fill(T(1));
        b.beta.mutable_value().fill(T(0));
        *b.stats = nn::RunningStats<T>(b.gamma.shape().c);
      }
    final_.weight.mutable_value().fill(T(0));
    final_.bias.mutable_value().fill(T(0));
  }

  Var<T> forward(const Var<T>& x) override {
    if (x.shape().c != 1) throw UsageError("generator expects a single-channel input, got " + x.shape().str());
    detail::require_divisible(x.shape(), divisor(), "generator");
    const auto& tr = this->tracer_;
    const double a = spec_.leaky_slope;
    std::vector<Var<T>> skips{x};
    Var<T> h = x;
    for (int i = 1; i <= spec_.levels; ++i) {
      const auto& c = enc_[static_cast<size_t>(i - 1)];
      const std::string n = "enc" + std::to_string(i);
      h = tr.note(c(h), {n + ".conv", "conv", c.in_channels(), 0, c.geom.kernel, c.geom.stride});
      if (spec_.batch_norm)
        h = tr.note(enc_bn_[static_cast<size_t>(i - 1)](h, this->training_), {n + ".bn", "batch_norm", h.shape().c});
      h = tr.note(nn::leaky_relu(h, a), {n + ".act", "leaky_relu", h.shape().c, 0, 0, 0, a});
      skips.push_back(h);
    }
    for (int i = spec_.levels - 1, k = 0; i >= 0; --i, ++k) {
      const auto& skip = skips[static_cast<size_t>(i)];
      const std::string n = "dec" + std::to_string(i);
      h = tr.note(nn::upsample_trilinear(h, skip.shape().d, skip.shape().h, skip.shape().w),
                  {n + ".up", "upsample", h.shape().c, 0, 0, 0, 0, 0, "trilinear"});
      h = tr.note(nn::concat_channels(h, skip), {n + ".skip", "concat", h.shape().c + skip.shape().c});
      const auto& c = dec_[static_cast<size_t>(k)];
      h = tr.note(c(h), {n + ".conv", "conv", c.in_channels(), 0, c.geom.kernel, c.geom.stride});
      if (spec_.batch_norm)
        h = tr.note(dec_bn_[static_cast<size_t>(k)](h, this->training_), {n + ".bn", "batch_norm", h.shape().c});
      h = tr.note(nn::leaky_relu(h, a), {n + ".act", "leaky_relu", h.shape().c, 0, 0, 0, a});
    }
    h = tr.note(final_(h), {"final.conv", "conv", final_.in_channels(), 0, final_.geom.kernel, 1});
    if (spec_.residual) h = tr.note(nn::add(h, x), {"residual", "residual_add", 1});
    return tr.note(nn::clip(h, T(-1), T(1)), {"output", "clip", 1, 0, 0, 0, 0, 0, "[-1,1]"});
  }

  nn::NamedParams<T> params() const override {
    nn::NamedParams<T> out;
    for (size_t i = 0; i < enc_.size(); ++i) {
      enc_[i].collect("enc" + std::to_string(i + 1) + ".conv", out);
      if (spec_.batch_norm) enc_bn_[i].collect("enc" + std::to_string(i + 1) + ".bn", out);
    }
    for (size_t k = 0; k < dec_.size(); ++k) {
      const std::string n = "dec" + std::to_string(spec_.levels - 1 - static_cast<int>(k));
      dec_[k].collect(n + ".conv", out);
      if (spec_.batch_norm) dec_bn_[k].collect(n + ".bn", out);
    }
    final_.collect("final", out);
    return out;
  }

  nn::NamedBuffers<T> buffers() const override {
    nn::NamedBuffers<T> out;
    for (size_t i = 0; i < enc_bn_.size(); ++i) enc_bn_[i].collect_buffers("enc" + std::to_string(i + 1) + ".bn", out);
    for (size_t k = 0; k < dec_bn_.size(); ++k)
      dec_bn_[k].collect_buffers("dec" + std::to_string(spec_.levels - 1 - static_cast<int>(k)) + ".bn", out);
    return out;
  }

 private:
  GeneratorSpec spec_;
  std::vector<nn::ConvLayer<T>> enc_, dec_;
  std::vector<nn::BatchNormLayer<T>> enc_bn_, dec_bn_;
  nn::ConvLayer<T> final_;
};

// ---------------------------------------------------------------------------
// Condition broadcast: (N, C, 1, 1, 1) labels to (N, C, D, H, W) constant maps.

template <class T>
Tensor<T> broadcast_condition(const Tensor<T>& w, int64_t d, int64_t h, int64_t wd) {
  if (d < 1 || h < 1 || wd < 1) throw UsageError("broadcast_condition: dims must be positive");
  Tensor<T> out(Shape{w.shape.n, w.shape.c, d, h, wd});
  for (int64_t n = 0; n < w.shape.n; ++n)
    for (int64_t c = 0; c < w.shape.c; ++c) {
      T* p = out.channel(n, c);
      std::fill(p, p + out.shape.spatial(), w[n * w.shape.c + c]);
    }
  return out;
}

template <class T>
Tensor<T> broadcast_condition(const std::vector<float>& w, int64_t d, int64_t h, int64_t wd) {
  Tensor<T> lab(Shape{1, static_cast<int64_t>(w.size()), 1, 1, 1});
  for (size_t i = 0; i < w.size(); ++i) lab[static_cast<int64_t>(i)] = static_cast<T>(w[i]);
  return broadcast_condition(lab, d, h, wd);
}

// ---------------------------------------------------------------------------
// Discriminator: strided conv stack with one self-attention block, global
// pooling and a sigmoid probability per sample.

template <class T>
class Discriminator {
 public:
  explicit Discriminator(DiscriminatorSpec spec = {}) : spec_(spec) {
    spec_.validate();
    const nn::ConvGeom down{spec_.kernel, 2, 1, 1};
    for (int l = 1; l <= spec_.levels; ++l) {
      conv_.emplace_back(l == 1 ? spec_.input_channels() : spec_.channels(l - 1), spec_.channels(l), down);
      if (spec_.batch_norm && l >= 2) bn_.emplace_back(spec_.channels(l));
    }
    if (spec_.attention_layer > 0) attn_ = nn::AttentionLayer<T>(spec_.channels(spec_.attention_layer));
    head_ = nn::LinearLayer<T>(spec_.channels(spec_.levels), 1);
    init(0);
  }

  const DiscriminatorSpec& spec() const { return spec_; }
  nlohmann::json spec_json() const { return spec_; }
  int64_t receptive_radius() const { return receptive_field(spec_); }
  void set_training(bool t) { training_ = t; }
  bool training() const { return training_; }
  nn::AttentionLayer<T>& attention() { return attn_; }

  void init(uint64_t seed) {
    auto rng = detail::init_rng(seed, 2);
    for (auto& c : conv_) {
      nn::init_normal(c.weight, 0.02, rng);
      c.bias.mutable_value().fill(T(0));
    }
    for (auto& b : bn_) {
      b.gamma.mutable_value().fill(T(1));
      b.beta.mutable_value().fill(T(0));
      *b.stats = nn::RunningStats<T>(b.gamma.shape().c);
    }
    if (spec_.attention_layer > 0) {
      for (auto* v : {&attn_.w.wq, &attn_.w.wk, &attn_.w.wv}) nn::init_normal(*v, 0.02, rng);
      for (auto* v : {&attn_.w.bq, &attn_.w.bk, &attn_.w.bv, &attn_.w.gamma}) v->mutable_value().fill(T(0));
    }
    nn::init_normal(head_.weight, 0.02, rng);
    head_.bias.mutable_value().fill(T(0));
  }

  // thick, thin: (N, 1, D, H, W); cond: (N, condition_channels, 1, 1, 1). Returns (N, 1, 1, 1, 1).
  Var<T> forward(const Var<T>& thick, const Var<T>& thin, const Tensor<T>& cond) {
    if (!(thick.shape() == thin.shape()))
      throw UsageError("discriminator: thick " + thick.shape().str() + " and thin " + thin.shape().str() +
                       " shapes differ");
    if (thick.shape().c != 1) throw UsageError("discriminator: inputs must be single-channel");
    const Shape s = thick.shape();
    const auto& tr = tracer_;
    Var<T> x = tr.note(nn::concat_channels(thick, thin), {"input.pair", "concat", 2});
    if (spec_.condition_channels > 0) {
      if (cond.shape.c != spec_.condition_channels || cond.shape.n != s.n || cond.shape.spatial() != 1)
        throw UsageError("discriminator: condition must have shape (" + std::to_string(s.n) + ", " +
                         std::to_string(spec_.condition_channels) + ", 1, 1, 1), got " + cond.shape.str());
      Tensor<T> maps = broadcast_condition(cond, s.d, s.h, s.w);
      if (spec_.zero_condition) maps.fill(T(0));
      x = tr.note(nn::concat_channels(x, nn::leaf(std::move(maps))),
                  {"input.condition", "concat", 2 + spec_.condition_channels, 0, 0, 0, 0, 0,
                   spec_.zero_condition ? "zeroed" : "broadcast"});
    }
    const double a = spec_.leaky_slope;
    size_t b = 0;
    for (int l = 1; l <= spec_.levels; ++l) {
      const auto& c = conv_[static_cast<size_t>(l - 1)];
      const std::string n = "layer" + std::to_string(l);
      x = tr.note(c(x), {n + ".conv", "conv", c.in_channels(), 0, c.geom.kernel, c.geom.stride});
      if (spec_.batch_norm && l >= 2) x = tr.note(bn_[b++](x, training_), {n + ".bn", "batch_norm", x.shape().c});
      x = tr.note(nn::leaky_relu(x, a), {n + ".act", "leaky_relu", x.shape().c, 0, 0, 0, a});
      if (l == spec_.attention_layer) x = tr.note(attn_(x), {n + ".attention", "attention", x.shape().c});
    }
    x = tr.note(nn::global_avg_pool(x), {"pool", "global_avg_pool", x.shape().c});
    x = tr.note(head_(x), {"head", "linear", x.shape().c});
    return tr.note(nn::sigmoid(x), {"output", "sigmoid", 1});
  }

  std::vector<LayerInfo> describe(int64_t size) {
    std::vector<LayerInfo> out;
    nn::NoGradGuard ng;
    const bool was = training_;
    training_ = false;
    tracer_.enable(&out);
    const Var<T> z = nn::leaf(Tensor<T>(Shape{1, 1, size, size, size}));
    forward(z, z, Tensor<T>(Shape{1, spec_.condition_channels, 1, 1, 1}));
    tracer_.enable(nullptr);
    training_ = was;
    return out;
  }

  nn::NamedParams<T> params() const {
    nn::NamedParams<T> out;
    size_t b = 0;
    for (int l = 1; l <= spec_.levels; ++l) {
      conv_[static_cast<size_t>(l - 1)].collect("layer" + std::to_string(l) + ".conv", out);
      if (spec_.batch_norm && l >= 2) bn_[b++].collect("layer" + std::to_string(l) + ".bn", out);
      if (l == spec_.attention_layer) attn_.collect("layer" + std::to_string(l) + ".attention", out);
    }
    head_.collect("head", out);
    return out;
  }

  nn::NamedBuffers<T> buffers() const {
    nn::NamedBuffers<T> out;
    for (size_t b = 0; b < bn_.size(); ++b) bn_[b].collect_buffers("layer" + std::to_string(b + 2) + ".bn", out);
    return out;
  }

 private:
  DiscriminatorSpec spec_;
  std::vector<nn::ConvLayer<T>> conv_;
  std::vector<nn::BatchNormLayer<T>> bn_;
  nn::AttentionLayer<T> attn_;
  nn::LinearLayer<T> head_;
  bool training_ = true;
  detail::Tracer tracer_;
};

// ---------------------------------------------------------------------------
// Pix2Pix-style U-Net: strided convs down to the smallest map, transposed
// convs back up, tanh output, no residual path.

template <class T>
class Pix2PixGenerator final : public ImageNet<T> {
 public:
  explicit Pix2PixGenerator(Pix2PixSpec spec = {}) : spec_(spec) {
    spec_.validate();
    const int L = spec_.levels;
    const nn::ConvGeom g{spec_.kernel, 2, 1, 1};
    for (int i = 1; i <= L; ++i) {
      down_.emplace_back(i == 1 ? 1 : spec_.channels(i - 1), spec_.channels(i), g);
      if (i > 1 && i < L) down_bn_.emplace_back(spec_.channels(i));
    }
    for (int i = L; i >= 1; --i) {
      const int64_t in = i == L ? spec_.channels(L) : 2 * spec_.channels(i);
      const int64_t out = i == 1 ? 1 : spec_.channels(i - 1);
      up_.emplace_back(in, out, g, true);
      if (i > 1) up_bn_.emplace_back(out);
    }
    init(0);
  }

  const Pix2PixSpec& spec() const { return spec_; }
  std::string kind() const override { return "pix2pix"; }
  nlohmann::json spec_json() const override { return spec_; }
  int64_t divisor() const override { return spec_.divisor(); }
  int64_t receptive_radius() const override { return receptive_field(spec_); }

  void init(uint64_t seed) override {
    auto rng = detail::init_rng(seed, 3);
    for (auto* layers : {&down_, &up_})
      for (auto& c : *layers) {
        nn::init_normal(c.weight, 0.02, rng);
        c.bias.mutable_value().fill(T(0));
      }
    for (auto* bns : {&down_bn_, &up_bn_})
      for (auto& b : *bns) {
        b.gamma.mutable_value().fill(T(1));
        b.beta.mutable_value().fill(T(0));
        *b.stats = nn::RunningStats<T>(b.gamma.shape().c);
      }
  }

  Var<T> forward(const Var<T>& x) override {
    if (x.shape().c != 1) throw UsageError("pix2pix expects a single-channel input, got " + x.shape().str());
    detail::require_divisible(x.shape(), divisor(), "pix2pix");
    const auto& tr = this->tracer_;
    const int L = spec_.levels;
    const double a = spec_.leaky_slope;
    std::vector<Var<T>> e;
    Var<T> h = x;
    for (int i = 1; i <= L; ++i) {
      const std::string n = "down" + std::to_string(i);
      if (i > 1) h = tr.note(nn::leaky_relu(h, a), {n + ".act", "leaky_relu", h.shape().c, 0, 0, 0, a});
      const auto& c = down_[static_cast<size_t>(i - 1)];
      h = tr.note(c(h), {n + ".conv", "conv", c.in_channels(), 0, c.geom.kernel, c.geom.stride});
      if (i > 1 && i < L)
        h = tr.note(down_bn_[static_cast<size_t>(i - 2)](h, this->training_), {n + ".bn", "batch_norm", h.shape().c});
      e.push_back(h);
    }
    for (int i = L, k = 0; i >= 1; --i, ++k) {
      const std::string n = "up" + std::to_string(i);
      if (i < L) h = tr.note(nn::concat_channels(h, e[static_cast<size_t>(i - 1)]), {n + ".skip", "concat", 2 * h.shape().c});
      h = tr.note(nn::relu(h), {n + ".act", "relu", h.shape().c});
      const auto& c = up_[static_cast<size_t>(k)];
      h = tr.note(c(h), {n + ".conv", "conv_transpose", c.in_channels(), 0, c.geom.kernel, c.geom.stride});
      if (i > 1)
        h = tr.note(up_bn_[static_cast<size_t>(k)](h, this->training_), {n + ".bn", "batch_norm", h.shape().c});
    }
    return tr.note(nn::tanh(h), {"output", "tanh", 1});
  }

  nn::NamedParams<T> params() const override {
    nn::NamedParams<T> out;
    const int L = spec_.levels;
    for (int i = 1; i <= L; ++i) {
      down_[static_cast<size_t>(i - 1)].collect("down" + std::to_string(i) + ".conv", out);
      if (i > 1 && i < L) down_bn_[static_cast<size_t>(i - 2)].collect("down" + std::to_string(i) + ".bn", out);
    }
    for (int i = L, k = 0; i >= 1; --i, ++k) {
      up_[static_cast<size_t>(k)].collect("up" + std::to_string(i) + ".conv", out);
      if (i > 1) up_bn_[static_cast<size_t>(k)].collect("up" + std::to_string(i) + ".bn", out);
    }
    return out;
  }

  nn::NamedBuffers<T> buffers() const override {
    nn::NamedBuffers<T> out;
    const int L = spec_.levels;
    for (int i = 2; i < L; ++i) down_bn_[static_cast<size_t>(i - 2)].collect_buffers("down" + std::to_string(i) + ".bn", out);
    for (int i = L, k = 0; i > 1; --i, ++k) up_bn_[static_cast<size_t>(k)].collect_buffers("up" + std::to_string(i) + ".bn", out);
    return out;
  }

 private:
  Pix2PixSpec spec_;
  std::vector<nn::ConvLayer<T>> down_, up_;
  std::vector<nn::BatchNormLayer<T>> down_bn_, up_bn_;
};

// ---------------------------------------------------------------------------
// Three-layer SRCNN with cubic kernels and same padding.

template <class T>
class Srcnn3d final : public ImageNet<T> {
 public:
  explicit Srcnn3d(SrcnnSpec spec = {}) : spec_(spec) {
    spec_.validate();
    auto same = [](int k) { return nn::ConvGeom{k, 1, k / 2, k / 2}; };
    c1_ = nn::ConvLayer<T>(1, spec_.channels1, same(spec_.kernel1));
    c2_ = nn::ConvLayer<T>(spec_.channels1, spec_.channels2, same(spec_.kernel2));
    c3_ = nn::ConvLayer<T>(spec_.channels2, 1, same(spec_.kernel3));
    init(0);
  }

  const SrcnnSpec& spec() const { return spec_; }
  std::string kind() const override { return "srcnn"; }
  nlohmann::json spec_json() const override { return spec_; }
  int64_t divisor() const override { return 1; }
  int64_t receptive_radius() const override { return receptive_field(spec_); }
  std::array<nn::ConvLayer<T>*, 3> layers() { return {&c1_, &c2_, &c3_}; }

  void init(uint64_t seed) override {
    auto rng = detail::init_rng(seed, 4);
    for (auto* c : layers()) {
      nn::init_he(c->weight, c->in_channels() * int64_t{c->geom.kernel} * c->geom.kernel * c->geom.kernel, rng);
      c->bias.mutable_value().fill(T(0));
    }
  }

  Var<T> forward(const Var<T>& x) override {
    if (x.shape().c != 1) throw UsageError("srcnn expects a single-channel input, got " + x.shape().str());
    const auto& tr = this->tracer_;
    Var<T> h = tr.note(c1_(x), {"conv1", "conv", 1, 0, c1_.geom.kernel, 1});
    h = tr.note(nn::relu(h), {"act1", "relu", h.shape().c});
    h = tr.note(c2_(h), {"conv2", "conv", c2_.in_channels(), 0, c2_.geom.kernel, 1});
    h = tr.note(nn::relu(h), {"act2", "relu", h.shape().c});
    return tr.note(c3_(h), {"conv3", "conv", c3_.in_channels(), 0, c3_.geom.kernel, 1});
  }

  nn::NamedParams<T> params() const override {
    nn::NamedParams<T> out;
    c1_.collect("conv1", out);
    c2_.collect("conv2", out);
    c3_.collect("conv3", out);
    return out;
  }

 private:
  SrcnnSpec spec_;
  nn::ConvLayer<T> c1_, c2_, c3_;
};

}  // namespace vts
