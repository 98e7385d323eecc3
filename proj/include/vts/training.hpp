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

// Adversarial training: losses, the per-step update, checkpoints and the
// epoch loop with CSV loss logging.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vts/checkpoint.hpp"
#include "vts/degrader.hpp"
#include "vts/nets.hpp"
#include "vts/nn/adam.hpp"
#include "vts/version.hpp"

namespace vts {

inline constexpr double kProbEps = 1e-7;

// ---------------------------------------------------------------------------
// Model kinds

enum class ModelKind { kVts, kVtsNoCond, kVtsNoHf, kPix2Pix, kSrcnn };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kVts: return "vts";
    case ModelKind::kVtsNoCond: return "vts-nocond";
    case ModelKind::kVtsNoHf: return "vts-nohf";
    case ModelKind::kPix2Pix: return "pix2pix";
    case ModelKind::kSrcnn: return "srcnn";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : {ModelKind::kVts, ModelKind::kVtsNoCond, ModelKind::kVtsNoHf, ModelKind::kPix2Pix, ModelKind::kSrcnn})
    if (to_string(k) == s) return k;
  throw UsageError("unknown model kind '" + s + "' (expected vts, vts-nocond, vts-nohf, pix2pix or srcnn)");
}

inline bool is_adversarial(ModelKind k) { return k != ModelKind::kSrcnn; }

// ---------------------------------------------------------------------------
// Configuration and reports

struct TrainConfig {
  std::string model = "vts";
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_l1 = 100.0;
  double adv_weight = 1.0;
  int epochs = 100;
  int64_t max_steps = 0;  // 0: no cap beyond epochs
  int patch = 160;
  int batch_size = 1;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // steps; 0: once per epoch
  bool update_d = true;
  bool update_g = true;
  int workers = 0;  // 0: VTS_NUM_WORKERS or 1
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  Pix2PixSpec pix2pix;
  SrcnnSpec srcnn;
  AugmentConfig augment;

  ModelKind kind() const { return model_kind_from_string(model); }

  void validate() const {
    kind();
    if (!(lr > 0)) throw UsageError("lr must be positive");
    if (!(lambda_l1 >= 0)) throw UsageError("lambda_l1 must be non-negative");
    if (patch <= 0 || patch % 16 != 0) throw UsageError("patch must be a positive multiple of 16");
    if (batch_size < 1) throw UsageError("batch_size must be at least 1");
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw UsageError("Adam betas must lie in [0, 1)");
    generator.validate();
    discriminator.validate();
    pix2pix.validate();
    srcnn.validate();
  }
};

inline void to_json(nlohmann::json& j, const AugmentConfig& a) {
  j = {{"factors", a.factors},
       {"sigma_max", a.sigma_max},
       {"noise_max", a.noise_max},
       {"rot_max_deg", a.rot_max_deg},
       {"scale_jitter", a.scale_jitter}};
}
inline void from_json(const nlohmann::json& j, AugmentConfig& a) {
  AugmentConfig d;
  a.factors = j.value("factors", d.factors);
  a.sigma_max = j.value("sigma_max", d.sigma_max);
  a.noise_max = j.value("noise_max", d.noise_max);
  a.rot_max_deg = j.value("rot_max_deg", d.rot_max_deg);
  a.scale_jitter = j.value("scale_jitter", d.scale_jitter);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"lambda_l1", c.lambda_l1},
       {"adv_weight", c.adv_weight},
       {"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"patch", c.patch},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"update_d", c.update_d},
       {"update_g", c.update_g},
       {"workers", c.workers},
       {"generator", c.generator},
       {"discriminator", c.discriminator},
       {"pix2pix", c.pix2pix},
       {"srcnn", c.srcnn},
       {"augment", c.augment}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::vector<std::string> known{
      "model",     "lr",        "beta1",    "beta2",         "lambda_l1", "adv_weight", "epochs",
      "max_steps", "patch",     "batch_size", "seed",        "checkpoint_every", "update_d", "update_g",
      "workers",   "generator", "discriminator", "pix2pix",  "srcnn",     "augment"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw UsageError("unknown train config key '" + k + "'");
  TrainConfig d;
  c.model = j.value("model", d.model);
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.lambda_l1 = j.value("lambda_l1", d.lambda_l1);
  c.adv_weight = j.value("adv_weight", d.adv_weight);
  c.epochs = j.value("epochs", d.epochs);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.patch = j.value("patch", d.patch);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.update_d = j.value("update_d", d.update_d);
  c.update_g = j.value("update_g", d.update_g);
  c.workers = j.value("workers", d.workers);
  c.generator = j.value("generator", d.generator);
  c.discriminator = j.value("discriminator", d.discriminator);
  c.pix2pix = j.value("pix2pix", d.pix2pix);
  c.srcnn = j.value("srcnn", d.srcnn);
  c.augment = j.value("augment", d.augment);
}

struct LossReport {
  int64_t step = 0;
  double loss_d = 0, loss_g_adv = 0, loss_g_l1 = 0, d_real_mean = 0, d_fake_mean = 0;

  bool finite() const {
    for (double v : {loss_d, loss_g_adv, loss_g_l1, d_real_mean, d_fake_mean})
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const LossReport&) const = default;
};

inline constexpr const char* kLossCsvHeader = "step,loss_d,loss_g_adv,loss_g_l1,d_real_mean,d_fake_mean";

inline std::string csv_row(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.loss_d,
                r.loss_g_adv, r.loss_g_l1, r.d_real_mean, r.d_fake_mean);
  return buf;
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
void require_finite(const Var<T>& v, const char* what) {
  for (T x : v.value().data)
    if (!std::isfinite(static_cast<double>(x))) throw NumericError(std::string(what) + ": non-finite input");
}

// mean(-log p_real) + mean(-log(1 - p_fake)), with probabilities clamped to [eps, 1 - eps].
template <class T>
Var<T> loss_discriminator(const Var<T>& p_real, const Var<T>& p_fake) {
  require_finite(p_real, "loss_discriminator");
  require_finite(p_fake, "loss_discriminator");
  return nn::add(nn::mean_neg_log(p_real, false, kProbEps), nn::mean_neg_log(p_fake, true, kProbEps));
}

// adv_weight * mean(-log p_fake) + lambda * mean|y_hat - y|.
template <class T>
Var<T> loss_generator(const Var<T>& p_fake, const Var<T>& y_hat, const Var<T>& y, double lambda_l1,
                      double adv_weight = 1.0) {
  require_finite(p_fake, "loss_generator");
  return nn::add(nn::scale(nn::mean_neg_log(p_fake, false, kProbEps), static_cast<T>(adv_weight)),
                 nn::scale(nn::mean_abs_diff(y_hat, y), static_cast<T>(lambda_l1)));
}

// ---------------------------------------------------------------------------
// Batches

struct Batch {
  Tensor<float> thick, thin, cond;
  std::vector<int64_t> indices;
};

inline Tensor<float> volume_to_tensor(const Volume& v) {
  const Dims d = v.dims();
  return Tensor<float>(Shape{1, 1, d.z, d.y, d.x}, std::vector<float>(v.data().begin(), v.data().end()));
}

inline Batch make_batch(const std::vector<TrainingSample>& samples) {
  if (samples.empty()) throw UsageError("empty batch");
  const Dims d = samples.front().thin.dims();
  const auto n = static_cast<int64_t>(samples.size());
  Batch b{Tensor<float>(Shape{n, 1, d.z, d.y, d.x}), Tensor<float>(Shape{n, 1, d.z, d.y, d.x}),
          Tensor<float>(Shape{n, kConditionChannels, 1, 1, 1}), {}};
  for (int64_t i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    if (!(s.thin.dims() == d) || !(s.thick.dims() == d)) throw UsageError("batch samples differ in shape");
    std::copy(s.thick.data().begin(), s.thick.data().end(), b.thick.channel(i, 0));
    std::copy(s.thin.data().begin(), s.thin.data().end(), b.thin.channel(i, 0));
    const auto w = s.condition.encode();
    std::copy(w.begin(), w.end(), b.cond.channel(i, 0));
    b.indices.push_back(s.index);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Model bundle: the image network and, for adversarial kinds, its discriminator.

struct Model {
  ModelKind kind = ModelKind::kVts;
  std::unique_ptr<ImageNet<float>> net;
  std::unique_ptr<Discriminator<float>> disc;

  static Model create(const TrainConfig& cfg) {
    Model m;
    m.kind = cfg.kind();
    switch (m.kind) {
      case ModelKind::kVts:
      case ModelKind::kVtsNoCond:
      case ModelKind::kVtsNoHf: {
        GeneratorSpec g = cfg.generator;
        g.residual = m.kind != ModelKind::kVtsNoHf;
        DiscriminatorSpec d = cfg.discriminator;
        d.zero_condition = m.kind == ModelKind::kVtsNoCond;
        m.net = std::make_unique<Generator<float>>(g);
        m.disc = std::make_unique<Discriminator<float>>(d);
        break;
      }
      case ModelKind::kPix2Pix: {
        DiscriminatorSpec d = cfg.discriminator;
        d.condition_channels = 0;
        d.attention_layer = 0;
        m.net = std::make_unique<Pix2PixGenerator<float>>(cfg.pix2pix);
        m.disc = std::make_unique<Discriminator<float>>(d);
        break;
      }
      case ModelKind::kSrcnn: m.net = std::make_unique<Srcnn3d<float>>(cfg.srcnn); break;
    }
    m.net->init(cfg.seed);
    if (m.disc) m.disc->init(cfg.seed);
    return m;
  }

  nlohmann::json header() const {
    nlohmann::json h{{"model", to_string(kind)}, {"net_kind", net->kind()}, {"net", net->spec_json()}};
    if (disc) h["discriminator"] = disc->spec_json();
    return h;
  }
};

// Builds the image network described by a checkpoint header and loads its weights.
inline std::unique_ptr<ImageNet<float>> make_image_net(const nlohmann::json& header) {
  const std::string kind = header.at("net_kind");
  if (kind == "generator" || kind == "generator-direct") {
    GeneratorSpec s = header.at("net");
    if (s.residual != (kind == "generator")) throw DataError("checkpoint generator spec does not match its kind");
    return std::make_unique<Generator<float>>(s);
  }
  if (kind == "pix2pix") return std::make_unique<Pix2PixGenerator<float>>(header.at("net").get<Pix2PixSpec>());
  if (kind == "srcnn") return std::make_unique<Srcnn3d<float>>(header.at("net").get<SrcnnSpec>());
  throw DataError("checkpoint has unknown network kind '" + kind + "'");
}

namespace detail {

inline void load_named(const Checkpoint& ck, const std::string& prefix, const nn::NamedParams<float>& params,
                       const nn::NamedBuffers<float>& buffers) {
  auto copy = [&](const std::string& name, Tensor<float>& dst) {
    const auto& src = ck.at(prefix + name);
    if (!(src.shape == dst.shape))
      throw DataError("checkpoint/spec mismatch for " + prefix + name + ": stored " + src.shape.str() + ", expected " +
                      dst.shape.str());
    dst.data = src.data;
  };
  for (const auto& [name, v] : params) copy(name, const_cast<Var<float>&>(v).mutable_value());
  for (const auto& [name, t] : buffers) copy(name, *t);
}

}  // namespace detail

inline std::unique_ptr<ImageNet<float>> load_image_net(const Checkpoint& ck) {
  auto net = make_image_net(ck.header);
  detail::load_named(ck, "G.", net->params(), net->buffers());
  net->set_training(false);
  return net;
}

inline std::unique_ptr<ImageNet<float>> load_image_net(const std::filesystem::path& path) {
  return load_image_net(load_checkpoint(path));
}

// ---------------------------------------------------------------------------
// Trainer

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<LabeledVolume> volumes)
      : cfg_(std::move(cfg)), model_((cfg_.validate(), Model::create(cfg_))),
        sampler_(std::make_unique<PatchSampler>(std::move(volumes), cfg_.augment, cfg_.patch, cfg_.seed)) {
    const nn::AdamConfig ac{cfg_.lr, cfg_.beta1, cfg_.beta2, 1e-8};
    adam_g_ = nn::Adam<float>(model_.net->params(), ac);
    if (model_.disc) adam_d_ = nn::Adam<float>(model_.disc->params(), ac);
  }

  const TrainConfig& config() const { return cfg_; }
  Model& model() { return model_; }
  int64_t steps_done() const { return step_; }
  int64_t steps_per_epoch() const {
    const auto n = static_cast<int64_t>(sampler_->volume_count());
    return (n + cfg_.batch_size - 1) / cfg_.batch_size;
  }
  int64_t total_steps() const {
    const int64_t t = steps_per_epoch() * cfg_.epochs;
    return cfg_.max_steps > 0 ? std::min(t, cfg_.max_steps) : t;
  }
  void set_dump_dir(std::filesystem::path p) { dump_dir_ = std::move(p); }

  // Batch consumed by step `k`: samples [k * B, (k + 1) * B).
  Batch batch_for_step(int64_t k) const {
    std::vector<TrainingSample> s;
    for (int64_t i = 0; i < cfg_.batch_size; ++i) s.push_back(sampler_->sample(k * cfg_.batch_size + i));
    return make_batch(s);
  }

  // Runs the next step on samples drawn through the worker queue.
  LossReport step() {
    const int64_t first = step_ * cfg_.batch_size;
    if (!queue_ || next_index_ != first) {
      queue_.reset();
      pending_.clear();
      const int w = cfg_.workers > 0 ? cfg_.workers : worker_count_from_env();
      queue_ = std::make_unique<PatchQueue>(*sampler_, first, w, static_cast<size_t>(2 * cfg_.batch_size));
      next_index_ = first;
    }
    std::vector<TrainingSample> samples;
    for (int64_t i = first; i < first + cfg_.batch_size; ++i) {
      while (!pending_.count(i)) {
        TrainingSample s = queue_->pop();
        pending_.emplace(s.index, std::move(s));
      }
      samples.push_back(std::move(pending_.at(i)));
      pending_.erase(i);
    }
    next_index_ = first + cfg_.batch_size;
    return train_step(make_batch(samples));
  }

  // One update on an explicit batch. Adversarial kinds: a discriminator step on
  // the real pair and the detached fake, then a generator step through the
  // discriminator with its parameters frozen.
  LossReport train_step(const Batch& b) {
    LossReport r;
    r.step = step_ + 1;
    auto& g = *model_.net;
    g.set_training(true);
    const Var<float> thick = nn::leaf(b.thick), thin = nn::leaf(b.thin);
    Var<float> fake = g.forward(thick);
    if (!model_.disc) {
      Var<float> mse = nn::mean_sq_diff(fake, thin);
      {
        nn::NoGradGuard ng;
        r.loss_g_l1 = nn::mean_abs_diff(fake, thin).item();
      }
      check_finite(r, b, fake, mse.item());
      if (cfg_.update_g) {
        adam_g_.zero_grad();
        nn::backward(mse);
        adam_g_.step();
      }
      ++step_;
      return r;
    }
    auto& d = *model_.disc;
    d.set_training(true);
    const Tensor<float> cond = d.spec().condition_channels > 0 ? b.cond : Tensor<float>(Shape{b.thick.shape.n, 0, 1, 1, 1});

    set_requires_grad(d.params(), cfg_.update_d);
    Var<float> p_real = d.forward(thick, thin, cond);
    Var<float> p_fake_d = d.forward(thick, nn::detach(fake), cond);
    r.d_real_mean = mean_of(p_real.value());
    r.d_fake_mean = mean_of(p_fake_d.value());
    check_finite(r, b, fake, 0.0);
    Var<float> loss_d = loss_discriminator(p_real, p_fake_d);
    r.loss_d = loss_d.item();
    if (cfg_.update_d) {
      check_finite(r, b, fake, r.loss_d);
      adam_d_.zero_grad();
      nn::backward(loss_d);
      adam_d_.step();
    }

    set_requires_grad(d.params(), false);
    Var<float> p_fake = d.forward(thick, fake, cond);
    Var<float> adv = nn::mean_neg_log(p_fake, false, kProbEps);
    Var<float> l1 = nn::mean_abs_diff(fake, thin);
    r.loss_g_adv = adv.item();
    r.loss_g_l1 = l1.item();
    check_finite(r, b, fake, r.loss_d);
    if (cfg_.update_g) {
      Var<float> loss_g = nn::add(nn::scale(adv, static_cast<float>(cfg_.adv_weight)),
                                  nn::scale(l1, static_cast<float>(cfg_.lambda_l1)));
      adam_g_.zero_grad();
      nn::backward(loss_g);
      adam_g_.step();
    }
    set_requires_grad(d.params(), true);
    ++step_;
    return r;
  }

  // --- checkpoints ---

  nlohmann::json checkpoint_header() const {
    nlohmann::json h = model_.header();
    h["format"] = "VTSCKPT1";
    h["step"] = step_;
    h["condition_layout"] = std::string(kConditionLayout);
    h["train_config"] = cfg_;
    h["tool_version"] = kToolVersion;
    h["adam"] = {{"G", adam_g_.steps()}, {"D", model_.disc ? adam_d_.steps() : 0}};
    return h;
  }

  void save(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, const Tensor<float>*>> ts;
    add_set(ts, "G.", model_.net->params(), model_.net->buffers(), adam_g_);
    if (model_.disc) add_set(ts, "D.", model_.disc->params(), model_.disc->buffers(), adam_d_);
    save_checkpoint(path, checkpoint_header(), ts);
  }

  void load(const std::filesystem::path& path) {
    const Checkpoint ck = load_checkpoint(path);
    const std::string kind = ck.header.at("model");
    if (kind != cfg_.model) throw DataError("checkpoint holds model '" + kind + "', config asks for '" + cfg_.model + "'");
    if (ck.header.at("net") != model_.net->spec_json()) throw DataError("checkpoint/spec mismatch for the image network");
    detail::load_named(ck, "G.", model_.net->params(), model_.net->buffers());
    load_adam(ck, "G.", adam_g_);
    adam_g_.set_steps(ck.header.at("adam").at("G"));
    if (model_.disc) {
      if (ck.header.at("discriminator") != model_.disc->spec_json())
        throw DataError("checkpoint/spec mismatch for the discriminator");
      detail::load_named(ck, "D.", model_.disc->params(), model_.disc->buffers());
      load_adam(ck, "D.", adam_d_);
      adam_d_.set_steps(ck.header.at("adam").at("D"));
    }
    step_ = ck.header.at("step");
    queue_.reset();
  }

 private:
  static double mean_of(const Tensor<float>& t) {
    double s = 0;
    for (float v : t.data) s += v;
    return s / static_cast<double>(t.size());
  }

  static void set_requires_grad(const nn::NamedParams<float>& ps, bool r) {
    for (const auto& [n, v] : ps) const_cast<Var<float>&>(v).set_requires_grad(r);
  }

  static void add_set(std::vector<std::pair<std::string, const Tensor<float>*>>& ts, const std::string& prefix,
                      const nn::NamedParams<float>& params, const nn::NamedBuffers<float>& buffers,
                      nn::Adam<float>& adam) {
    for (const auto& [name, v] : params) ts.emplace_back(prefix + name, &v.value());
    for (const auto& [name, t] : buffers) ts.emplace_back(prefix + name, t);
    for (size_t i = 0; i < params.size(); ++i) {
      ts.emplace_back("adam." + prefix + "m." + params[i].first, &adam.first_moments()[i]);
      ts.emplace_back("adam." + prefix + "v." + params[i].first, &adam.second_moments()[i]);
    }
  }

  static void load_adam(const Checkpoint& ck, const std::string& prefix, nn::Adam<float>& adam) {
    const auto& ps = adam.params();
    for (size_t i = 0; i < ps.size(); ++i) {
      adam.first_moments()[i].data = ck.at("adam." + prefix + "m." + ps[i].first).data;
      adam.second_moments()[i].data = ck.at("adam." + prefix + "v." + ps[i].first).data;
    }
  }

  void check_finite(const LossReport& r, const Batch& b, const Var<float>& fake, double extra) const {
    if (r.finite() && std::isfinite(extra)) return;
    std::string where;
    if (dump_dir_) {
      auto stats = [](const Tensor<float>& t) {
        double lo = INFINITY, hi = -INFINITY, s = 0;
        int64_t bad = 0;
        for (float v : t.data) {
          if (!std::isfinite(v)) {
            ++bad;
            continue;
          }
          lo = std::min<double>(lo, v), hi = std::max<double>(hi, v), s += v;
        }
        return nlohmann::json{{"min", lo}, {"max", hi}, {"mean", s / static_cast<double>(t.size())}, {"non_finite", bad}};
      };
      nlohmann::json dump{{"step", r.step},
                          {"loss_d", r.loss_d},
                          {"loss_g_adv", r.loss_g_adv},
                          {"loss_g_l1", r.loss_g_l1},
                          {"d_real_mean", r.d_real_mean},
                          {"d_fake_mean", r.d_fake_mean},
                          {"sample_indices", b.indices},
                          {"thick", stats(b.thick)},
                          {"thin", stats(b.thin)},
                          {"prediction", stats(fake.value())}};
      const auto p = *dump_dir_ / ("nonfinite_step" + std::to_string(r.step) + ".json");
      std::ofstream(p) << dump.dump(2) << "\n";
      where = " (state written to " + p.string() + ")";
    }
    throw NumericError("non-finite loss at step " + std::to_string(r.step) + ": " + csv_row(r) + where);
  }

  TrainConfig cfg_;
  Model model_;
  std::unique_ptr<PatchSampler> sampler_;
  nn::Adam<float> adam_g_, adam_d_;
  int64_t step_ = 0;
  std::unique_ptr<PatchQueue> queue_;
  std::map<int64_t, TrainingSample> pending_;
  int64_t next_index_ = -1;
  std::optional<std::filesystem::path> dump_dir_;
};

// ---------------------------------------------------------------------------
// Loop

struct TrainResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<LossReport> reports;
};

// Trains for the configured epochs (or max_steps), appending to rundir/losses.csv
// and writing rundir/ckpt_<step>.vtsckpt plus rundir/model.ckpt (latest).
inline TrainResult train_loop(const TrainConfig& cfg, std::vector<LabeledVolume> volumes,
                              const std::filesystem::path& rundir,
                              const std::optional<std::filesystem::path>& resume = std::nullopt,
                              const std::function<void(const LossReport&)>& on_step = {}) {
  if (volumes.empty()) throw DataError("empty manifest: no training volumes");
  std::filesystem::create_directories(rundir);
  Trainer t(cfg, std::move(volumes));
  t.set_dump_dir(rundir);
  if (resume) t.load(*resume);
  const auto csv = rundir / "losses.csv";
  const bool fresh = !resume || !std::filesystem::exists(csv);
  std::ofstream log(csv, fresh ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + csv.string());
  if (fresh) log << kLossCsvHeader << "\n";
  const int64_t every = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : t.steps_per_epoch();
  TrainResult res;
  auto save = [&] {
    char name[64];
    std::snprintf(name, sizeof name, "ckpt_%06lld.vtsckpt", static_cast<long long>(t.steps_done()));
    t.save(rundir / name);
    std::filesystem::copy_file(rundir / name, rundir / "model.ckpt", std::filesystem::copy_options::overwrite_existing);
    res.checkpoints.push_back(rundir / name);
  };
  while (t.steps_done() < t.total_steps()) {
    const LossReport r = t.step();
    log << csv_row(r) << "\n" << std::flush;
    res.reports.push_back(r);
    if (on_step) on_step(r);
    if (t.steps_done() % every == 0 || t.steps_done() == t.total_steps()) save();
  }
  return res;
}

}  // namespace vts
