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

// Thick-slice simulation from thin volumes, training patch pairs, and the
// 8-value discriminator condition vector.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "vts/body_part.hpp"
#include "vts/error.hpp"
#include "vts/volume.hpp"

namespace vts {

struct AugmentConfig {
  std::vector<int> factors{4, 8};
  double sigma_max = 3.2;
  double noise_max = 0.02;  // normalized units, about 41 HU
  double rot_max_deg = 5.0;
  double scale_jitter = 0.05;
};

struct DegradeParams {
  int factor = 4;
  double sigma_vox = 0.0;
  double noise_std = 0.0;
  std::array<double, 3> rot_deg{0.0, 0.0, 0.0};  // about z, y, x
  double scale = 1.0;

  bool is_identity_affine() const {
    return rot_deg[0] == 0.0 && rot_deg[1] == 0.0 && rot_deg[2] == 0.0 && scale == 1.0;
  }

  // Ranges used for training samples.
  void validate() const {
    if (factor != 4 && factor != 8) throw UsageError("factor must be 4 or 8");
    if (!(sigma_vox >= 0.0 && sigma_vox <= 3.2)) throw UsageError("sigma_vox must be in [0, 3.2]");
    if (!(noise_std >= 0.0)) throw UsageError("noise_std must be >= 0");
    if (!(scale >= 0.95 && scale <= 1.05)) throw UsageError("scale must be in [0.95, 1.05]");
    for (double r : rot_deg)
      if (!(std::abs(r) <= 5.0)) throw UsageError("rotation must be within +/-5 degrees");
  }
};

// Draw order is fixed: factor, sigma, rz, ry, rx, scale, noise.
inline DegradeParams sample_params(std::mt19937_64& rng, const AugmentConfig& cfg = {}) {
  if (cfg.factors.empty()) throw UsageError("augment config needs at least one factor");
  DegradeParams p;
  std::uniform_int_distribution<size_t> pick(0, cfg.factors.size() - 1);
  p.factor = cfg.factors[pick(rng)];
  p.sigma_vox = std::uniform_real_distribution<double>(0.0, cfg.sigma_max)(rng);
  std::uniform_real_distribution<double> rot(-cfg.rot_max_deg, cfg.rot_max_deg);
  for (double& r : p.rot_deg) r = rot(rng);
  p.scale = std::uniform_real_distribution<double>(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter)(rng);
  p.noise_std = cfg.noise_max > 0 ? std::uniform_real_distribution<double>(0.0, cfg.noise_max)(rng) : 0.0;
  return p;
}

inline void add_gaussian_noise(Volume& vol, double stddev, std::mt19937_64& rng) {
  if (stddev <= 0.0) return;
  std::normal_distribution<double> n(0.0, stddev);
  for (float& v : vol.data()) v = static_cast<float>(v + n(rng));
}

// gaussian_z -> subsample_z -> spline_z_upsample -> noise -> clip. The output
// keeps the input grid; slices past the last retained knot follow the
// spline's linear continuation.
inline Volume degrade(const Volume& thin, const DegradeParams& p, std::mt19937_64& rng) {
  if (thin.domain() != ValueDomain::kNormalized) throw UsageError("degrade expects a normalized volume");
  if (p.factor < 1) throw UsageError("degrade: factor must be >= 1");
  if (!(p.sigma_vox >= 0) || !(p.noise_std >= 0)) throw UsageError("degrade: sigma and noise must be >= 0");
  if (thin.dims().z <= p.factor)
    throw UsageError("degrade: z-dim " + std::to_string(thin.dims().z) + " must exceed factor " +
                     std::to_string(p.factor));
  const Spacing s = thin.spacing();
  if (std::abs(s.z - s.y) > 1e-6 || std::abs(s.z - s.x) > 1e-6)
    throw DataError("degrade expects an isotropic volume");
  Volume out = spline_z_upsample(subsample_z(gaussian_z(thin, p.sigma_vox), p.factor), p.factor, thin.dims().z);
  add_gaussian_noise(out, p.noise_std, rng);
  clip_inplace(out, -1.0f, 1.0f);
  return out;
}

struct Origin {
  int64_t z = 0, y = 0, x = 0;
};

// Samples `size` voxels of `vol` after rotating (z, y, x order, degrees) and
// uniformly scaling about the volume centre, starting at `origin` in the
// transformed frame. Out-of-bounds samples are `fill`.
inline Volume affine_crop(const Volume& vol, const DegradeParams& p, Origin origin, Dims size, float fill = -1.0f) {
  const Dims d = vol.dims();
  const double c[3] = {0.5 * static_cast<double>(d.z - 1), 0.5 * static_cast<double>(d.y - 1),
                       0.5 * static_cast<double>(d.x - 1)};
  const double deg = std::numbers::pi / 180.0;
  // Rotation matrices act on (z, y, x) column vectors; about-z rotates the y-x plane.
  auto rot = [](int axis, double a) {
    std::array<std::array<double, 3>, 3> m{};
    const double cs = std::cos(a), sn = std::sin(a);
    const int i = (axis + 1) % 3, j = (axis + 2) % 3;
    m[static_cast<size_t>(axis)][static_cast<size_t>(axis)] = 1.0;
    m[static_cast<size_t>(i)][static_cast<size_t>(i)] = cs;
    m[static_cast<size_t>(i)][static_cast<size_t>(j)] = -sn;
    m[static_cast<size_t>(j)][static_cast<size_t>(i)] = sn;
    m[static_cast<size_t>(j)][static_cast<size_t>(j)] = cs;
    return m;
  };
  auto mul = [](const auto& a, const auto& b) {
    std::array<std::array<double, 3>, 3> r{};
    for (size_t i = 0; i < 3; ++i)
      for (size_t j = 0; j < 3; ++j)
        for (size_t k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
  };
  // Inverse of R = Rz Ry Rx is its transpose; fold in the inverse scale.
  const auto fwd = mul(mul(rot(0, p.rot_deg[0] * deg), rot(1, p.rot_deg[1] * deg)), rot(2, p.rot_deg[2] * deg));
  std::array<std::array<double, 3>, 3> inv{};
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j) inv[i][j] = fwd[j][i] / p.scale;

  Volume out(size, vol.spacing(), vol.domain(), fill);
  const double hi[3] = {static_cast<double>(d.z - 1), static_cast<double>(d.y - 1), static_cast<double>(d.x - 1)};
  for (int64_t z = 0; z < size.z; ++z)
    for (int64_t y = 0; y < size.y; ++y)
      for (int64_t x = 0; x < size.x; ++x) {
        const double q[3] = {static_cast<double>(z + origin.z) - c[0], static_cast<double>(y + origin.y) - c[1],
                             static_cast<double>(x + origin.x) - c[2]};
        double u[3];
        bool ok = true;
        for (size_t i = 0; i < 3; ++i) {
          u[i] = c[i] + inv[i][0] * q[0] + inv[i][1] * q[1] + inv[i][2] * q[2];
          if (!(u[i] >= 0.0 && u[i] <= hi[i])) ok = false;
        }
        if (!ok) continue;
        int64_t i0[3], i1[3];
        double w[3];
        const int64_t n[3] = {d.z, d.y, d.x};
        for (size_t i = 0; i < 3; ++i) {
          i0[i] = static_cast<int64_t>(std::floor(u[i]));
          i1[i] = std::min(i0[i] + 1, n[i] - 1);
          w[i] = u[i] - static_cast<double>(i0[i]);
        }
        auto row = [&](int64_t zz, int64_t yy) {
          return (1.0 - w[2]) * vol.at(zz, yy, i0[2]) + w[2] * vol.at(zz, yy, i1[2]);
        };
        auto plane = [&](int64_t zz) { return (1.0 - w[1]) * row(zz, i0[1]) + w[1] * row(zz, i1[1]); };
        out.at(z, y, x) = static_cast<float>((1.0 - w[0]) * plane(i0[0]) + w[0] * plane(i1[0]));
      }
  return out;
}

struct PatchPair {
  Volume thin;
  Volume thick;
};

inline void check_patch_size(int patch) {
  if (patch < 16 || patch % 16 != 0)
    throw UsageError("patch size " + std::to_string(patch) + " must be a positive multiple of 16");
}

// Affine-transforms the thin volume, crops patch^3 at `origin`, and degrades it.
inline PatchPair make_patch_pair_at(const Volume& thin, const DegradeParams& p, int patch, Origin origin,
                                    std::mt19937_64& rng) {
  check_patch_size(patch);
  PatchPair pair;
  pair.thin = affine_crop(thin, p, origin, {patch, patch, patch});
  pair.thick = degrade(pair.thin, p, rng);
  return pair;
}

// Random crop origin; axes shorter than the patch are centred and padded with air.
inline PatchPair make_patch_pair(const Volume& thin, const DegradeParams& p, int patch, std::mt19937_64& rng) {
  check_patch_size(patch);
  auto pick = [&](int64_t n) -> int64_t {
    if (n <= patch) return -(patch - n) / 2;
    return std::uniform_int_distribution<int64_t>(0, n - patch)(rng);
  };
  const Dims d = thin.dims();
  Origin o;
  o.z = pick(d.z);
  o.y = pick(d.y);
  o.x = pick(d.x);
  return make_patch_pair_at(thin, p, patch, o, rng);
}

// ---------------------------------------------------------------------------
// Condition vector

enum class IntervalClass : int { k4mm = 0, k8mm = 1 };
enum class SigmaClass : int { kLow = 0, kHigh = 1 };

inline constexpr int kConditionChannels = 8;
inline constexpr std::string_view kConditionLayout = "head,chest,abdomen,leg|4mm,8mm|low_sigma,high_sigma";
inline constexpr double kSigmaClassThreshold = 1.6;

struct ConditionLabel {
  BodyPart body_part = BodyPart::kHead;
  IntervalClass interval = IntervalClass::k4mm;
  SigmaClass sigma = SigmaClass::kLow;

  std::array<float, kConditionChannels> encode() const {
    std::array<float, kConditionChannels> w{};
    w[static_cast<size_t>(body_part)] = 1.0f;
    w[4 + static_cast<size_t>(interval)] = 1.0f;
    w[6 + static_cast<size_t>(sigma)] = 1.0f;
    return w;
  }
};

inline ConditionLabel make_condition(const DegradeParams& p, BodyPart part) {
  return {part, p.factor == 4 ? IntervalClass::k4mm : IntervalClass::k8mm,
          p.sigma_vox < kSigmaClassThreshold ? SigmaClass::kLow : SigmaClass::kHigh};
}

// ---------------------------------------------------------------------------
// Training sample stream

struct LabeledVolume {
  Volume volume;  // normalized, 1 mm isotropic
  BodyPart body_part = BodyPart::kHead;
};

struct TrainingSample {
  int64_t index = 0;
  size_t volume_index = 0;
  DegradeParams params;
  ConditionLabel condition;
  Volume thin, thick;
};

// Sample i is a pure function of (seed, i): volumes are visited in a
// per-epoch permutation and each sample draws from its own seeded stream.
class PatchSampler {
 public:
  PatchSampler(std::vector<LabeledVolume> volumes, AugmentConfig augment, int patch, uint64_t seed)
      : volumes_(std::move(volumes)), augment_(std::move(augment)), patch_(patch), seed_(seed) {
    if (volumes_.empty()) throw DataError("no training volumes");
    check_patch_size(patch_);
  }

  size_t volume_count() const { return volumes_.size(); }
  int patch() const { return patch_; }

  size_t volume_for(int64_t index) const {
    const auto n = static_cast<int64_t>(volumes_.size());
    const int64_t epoch = index / n;
    std::vector<size_t> perm(volumes_.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::mt19937_64 rng = stream(epoch, 0x7065726dull);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm[static_cast<size_t>(index % n)];
  }

  TrainingSample sample(int64_t index) const {
    TrainingSample s;
    s.index = index;
    s.volume_index = volume_for(index);
    std::mt19937_64 rng = stream(index, 0x73616d70ull);
    s.params = sample_params(rng, augment_);
    const auto& lv = volumes_[s.volume_index];
    s.condition = make_condition(s.params, lv.body_part);
    auto pair = make_patch_pair(lv.volume, s.params, patch_, rng);
    s.thin = std::move(pair.thin);
    s.thick = std::move(pair.thick);
    return s;
  }

 private:
  std::mt19937_64 stream(int64_t index, uint64_t tag) const {
    const auto u = static_cast<uint64_t>(index);
    std::seed_seq seq{static_cast<uint32_t>(seed_), static_cast<uint32_t>(seed_ >> 32), static_cast<uint32_t>(u),
                      static_cast<uint32_t>(u >> 32), static_cast<uint32_t>(tag)};
    return std::mt19937_64(seq);
  }

  std::vector<LabeledVolume> volumes_;
  AugmentConfig augment_;
  int patch_;
  uint64_t seed_;
};

// Worker count from VTS_NUM_WORKERS, default 1.
inline int worker_count_from_env() {
  if (const char* v = std::getenv("VTS_NUM_WORKERS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 1;
}

// Bounded producer/consumer queue over a PatchSampler. Worker w produces
// samples first+w, first+w+W, ...; with one worker the consumer receives
// samples in index order, with several the arrival order is unspecified
// (each sample's content is still a function of its index).
class PatchQueue {
 public:
  PatchQueue(const PatchSampler& sampler, int64_t first_index, int workers = 1, size_t capacity = 4)
      : sampler_(sampler), capacity_(std::max<size_t>(capacity, 1)) {
    if (workers < 1) workers = 1;
    for (int w = 0; w < workers; ++w)
      threads_.emplace_back([this, first_index, w, workers](std::stop_token st) {
        for (int64_t i = first_index + w; !st.stop_requested(); i += workers) {
          try {
            TrainingSample s = sampler_.sample(i);
            std::unique_lock lk(mu_);
            not_full_.wait(lk, st, [&] { return queue_.size() < capacity_; });
            if (st.stop_requested()) return;
            queue_.push_back(std::move(s));
            not_empty_.notify_one();
          } catch (...) {
            std::lock_guard lk(mu_);
            if (!error_) error_ = std::current_exception();
            not_empty_.notify_all();
            return;
          }
        }
      });
  }

  PatchQueue(const PatchQueue&) = delete;
  PatchQueue& operator=(const PatchQueue&) = delete;

  ~PatchQueue() {
    for (auto& t : threads_) t.request_stop();
    not_full_.notify_all();
  }

  TrainingSample pop() {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !queue_.empty() || error_; });
    if (queue_.empty() && error_) std::rethrow_exception(error_);
    TrainingSample s = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_all();
    return s;
  }

 private:
  const PatchSampler& sampler_;
  size_t capacity_;
  std::mutex mu_;
  std::condition_variable_any not_full_;
  std::condition_variable_any not_empty_;
  std::deque<TrainingSample> queue_;
  std::exception_ptr error_;
  std::vector<std::jthread> threads_;  // last member: joined before the rest is destroyed
};

}  // namespace vts
