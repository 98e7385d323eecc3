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

// Differentiable operations on Var<T>.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "vts/nn/autograd.hpp"
#include "vts/nn/conv.hpp"

namespace vts::nn {

// ---------------------------------------------------------------------------
// Convolutions

template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const ConvGeom& g) {
  Tensor<T> y = conv3d_forward(x.value(), w.value(), b.defined() ? b.value().ptr() : nullptr, g);
  auto xn = x.shared(), wn = w.shared(), bn = b.shared();
  return make_result(std::move(y), {x, w, b}, [xn, wn, bn, g](Node<T>& self) {
    conv3d_backward(xn->value, wn->value, self.grad, g, grad_target(xn), grad_target(wn),
                    bn && bn->requires_grad ? bn->grad_buffer().ptr() : nullptr);
  });
}

template <class T>
Var<T> conv_transpose3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const ConvGeom& g) {
  Tensor<T> y = conv_transpose3d_forward(x.value(), w.value(), b.defined() ? b.value().ptr() : nullptr, g);
  auto xn = x.shared(), wn = w.shared(), bn = b.shared();
  return make_result(std::move(y), {x, w, b}, [xn, wn, bn, g](Node<T>& self) {
    conv_transpose3d_backward(xn->value, wn->value, self.grad, g, grad_target(xn), grad_target(wn),
                              bn && bn->requires_grad ? bn->grad_buffer().ptr() : nullptr);
  });
}

// ---------------------------------------------------------------------------
// Normalization

template <class T>
struct RunningStats {
  Tensor<T> mean, var;
  explicit RunningStats(int64_t channels = 0)
      : mean(Shape{1, channels, 1, 1, 1}, T(0)), var(Shape{1, channels, 1, 1, 1}, T(1)) {}
};

// Per-channel normalization over (N, D, H, W). In training mode the batch
// statistics are used and the running statistics updated; otherwise the
// running statistics are used and the op is a fixed per-channel affine map.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, RunningStats<T>& stats, bool training,
                  double momentum = 0.1, double eps = 1e-5) {
  const Shape s = x.shape();
  const int64_t sp = s.spatial(), m = s.n * sp;
  if (training && m < 2)
    throw UsageError("batch_norm in training mode needs more than one value per channel, got input " + s.str());
  std::vector<T> mean(static_cast<size_t>(s.c)), invstd(static_cast<size_t>(s.c));
  for (int64_t c = 0; c < s.c; ++c) {
    double mu, var;
    if (training) {
      double acc = 0;
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = x.value().channel(n, c);
        for (int64_t i = 0; i < sp; ++i) acc += p[i];
      }
      mu = acc / static_cast<double>(m);
      double sq = 0;
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = x.value().channel(n, c);
        for (int64_t i = 0; i < sp; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      var = sq / static_cast<double>(m);
      stats.mean[c] = static_cast<T>((1 - momentum) * stats.mean[c] + momentum * mu);
      stats.var[c] = static_cast<T>((1 - momentum) * stats.var[c] +
                                    momentum * var * static_cast<double>(m) / static_cast<double>(m - 1));
    } else {
      mu = stats.mean[c];
      var = stats.var[c];
    }
    mean[static_cast<size_t>(c)] = static_cast<T>(mu);
    invstd[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + eps));
  }
  Tensor<T> y(s);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const T* p = x.value().channel(n, c);
      T* q = y.channel(n, c);
      const T mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      const T ga = gamma.value()[c], be = beta.value()[c];
      for (int64_t i = 0; i < sp; ++i) q[i] = ga * (p[i] - mu) * is + be;
    }
  auto xn = x.shared(), gn = gamma.shared(), bn = beta.shared();
  return make_result(std::move(y), {x, gamma, beta}, [xn, gn, bn, mean, invstd, training, m](Node<T>& self) {
    const Shape s = xn->value.shape;
    const int64_t sp = s.spatial();
    Tensor<T>* dx = grad_target(xn);
    Tensor<T>* dg = grad_target(gn);
    Tensor<T>* db = grad_target(bn);
    for (int64_t c = 0; c < s.c; ++c) {
      const T mu = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = xn->value.channel(n, c);
        const T* g = self.grad.channel(n, c);
        for (int64_t i = 0; i < sp; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += g[i] * (p[i] - mu) * is;
        }
      }
      if (dg) (*dg)[c] += static_cast<T>(sum_dy_xhat);
      if (db) (*db)[c] += static_cast<T>(sum_dy);
      if (!dx) continue;
      const T ga = gn->value[c];
      for (int64_t n = 0; n < s.n; ++n) {
        const T* p = xn->value.channel(n, c);
        const T* g = self.grad.channel(n, c);
        T* d = dx->channel(n, c);
        if (training) {
          const double md = static_cast<double>(m);
          for (int64_t i = 0; i < sp; ++i) {
            const double xhat = (p[i] - mu) * is;
            d[i] += static_cast<T>(ga * is * (g[i] - sum_dy / md - xhat * sum_dy_xhat / md));
          }
        } else {
          for (int64_t i = 0; i < sp; ++i) d[i] += ga * is * g[i];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise

template <class T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  const T a = static_cast<T>(slope);
  for (int64_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0 ? xv[i] : a * xv[i];
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn, a](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] += xn->value[i] > 0 ? self.grad[i] : a * self.grad[i];
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu(x, 0.0);
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * self.value[i] * (T(1) - self.value[i]);
  });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x.value()[i]);
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * (T(1) - self.value[i] * self.value[i]);
  });
}

// Clamp to [lo, hi]; the gradient passes where lo <= x <= hi.
template <class T>
Var<T> clip(const Var<T>& x, T lo, T hi) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = std::clamp(x.value()[i], lo, hi);
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn, lo, hi](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t i = 0; i < dx.size(); ++i)
      if (xn->value[i] >= lo && xn->value[i] <= hi) dx[i] += self.grad[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) throw UsageError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> y(a.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  auto an = a.shared(), bn = b.shared();
  return make_result(std::move(y), {a, b}, [an, bn](Node<T>& self) {
    for (auto* d : {grad_target(an), grad_target(bn)})
      if (d)
        for (int64_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> y(x.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = s * x.value()[i];
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn, s](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] += s * self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Shape ops

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.d != sb.d || sa.h != sb.h || sa.w != sb.w)
    throw UsageError("concat_channels: shape mismatch " + sa.str() + " vs " + sb.str());
  Shape so = sa;
  so.c = sa.c + sb.c;
  Tensor<T> y(so);
  const int64_t sp = sa.spatial();
  for (int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().channel(n, 0), sa.c * sp, y.channel(n, 0));
    std::copy_n(b.value().channel(n, 0), sb.c * sp, y.channel(n, sa.c));
  }
  auto an = a.shared(), bn = b.shared();
  return make_result(std::move(y), {a, b}, [an, bn](Node<T>& self) {
    const Shape sa = an->value.shape;
    const int64_t cb = bn->value.shape.c, sp = sa.spatial();
    Tensor<T>* da = grad_target(an);
    Tensor<T>* db = grad_target(bn);
    for (int64_t n = 0; n < sa.n; ++n) {
      if (da) {
        const T* g = self.grad.channel(n, 0);
        T* d = da->channel(n, 0);
        for (int64_t i = 0; i < sa.c * sp; ++i) d[i] += g[i];
      }
      if (db) {
        const T* g = self.grad.channel(n, sa.c);
        T* d = db->channel(n, 0);
        for (int64_t i = 0; i < cb * sp; ++i) d[i] += g[i];
      }
    }
  });
}

// Linear resize along one spatial axis (2 = d, 3 = h, 4 = w) with
// half-pixel centres and edge clamping.
template <class T>
Var<T> resize_axis(const Var<T>& x, int axis, int64_t out_len) {
  const Shape s = x.shape();
  const int64_t dims[5] = {s.n, s.c, s.d, s.h, s.w};
  const int64_t in_len = dims[axis];
  if (in_len == out_len) return x;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= dims[i];
  for (int i = axis + 1; i < 5; ++i) inner *= dims[i];
  struct Tap {
    int64_t i0, i1;
    T w1;
  };
  std::vector<Tap> taps(static_cast<size_t>(out_len));
  for (int64_t j = 0; j < out_len; ++j) {
    double u = (static_cast<double>(j) + 0.5) * static_cast<double>(in_len) / static_cast<double>(out_len) - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(in_len - 1));
    const auto i0 = static_cast<int64_t>(std::floor(u));
    taps[static_cast<size_t>(j)] = {i0, std::min(i0 + 1, in_len - 1), static_cast<T>(u - static_cast<double>(i0))};
  }
  Shape so = s;
  (axis == 2 ? so.d : axis == 3 ? so.h : so.w) = out_len;
  Tensor<T> y(so);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < out_len; ++j) {
      const Tap& t = taps[static_cast<size_t>(j)];
      const T* a = x.value().ptr() + (o * in_len + t.i0) * inner;
      const T* b = x.value().ptr() + (o * in_len + t.i1) * inner;
      T* q = y.ptr() + (o * out_len + j) * inner;
      for (int64_t i = 0; i < inner; ++i) q[i] = (T(1) - t.w1) * a[i] + t.w1 * b[i];
    }
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn, taps, outer, inner, in_len, out_len](Node<T>& self) {
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < out_len; ++j) {
        const Tap& t = taps[static_cast<size_t>(j)];
        const T* g = self.grad.ptr() + (o * out_len + j) * inner;
        T* a = dx.ptr() + (o * in_len + t.i0) * inner;
        T* b = dx.ptr() + (o * in_len + t.i1) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          a[i] += (T(1) - t.w1) * g[i];
          b[i] += t.w1 * g[i];
        }
      }
  });
}

// Trilinear resize to (d, h, w), applied as three separable passes.
template <class T>
Var<T> upsample_trilinear(const Var<T>& x, int64_t d, int64_t h, int64_t w) {
  return resize_axis(resize_axis(resize_axis(x, 4, w), 3, h), 2, d);
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, 1, 1, 1});
  const int64_t sp = s.spatial();
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const T* p = x.value().channel(n, c);
      T acc = 0;
      for (int64_t i = 0; i < sp; ++i) acc += p[i];
      y[n * s.c + c] = acc / static_cast<T>(sp);
    }
  auto xn = x.shared();
  return make_result(std::move(y), {x}, [xn](Node<T>& self) {
    const Shape s = xn->value.shape;
    const int64_t sp = s.spatial();
    Tensor<T>& dx = xn->grad_buffer();
    for (int64_t n = 0; n < s.n; ++n)
      for (int64_t c = 0; c < s.c; ++c) {
        const T g = self.grad[n * s.c + c] / static_cast<T>(sp);
        T* d = dx.channel(n, c);
        for (int64_t i = 0; i < sp; ++i) d[i] += g;
      }
  });
}

// x: (N, in, 1, 1, 1); w: (out, in, 1, 1, 1); b: (1, out, 1, 1, 1) -> (N, out, 1, 1, 1)
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int64_t n = x.shape().n, in = x.shape().c * x.shape().spatial(), out = w.shape().n;
  if (w.shape().c != in) throw UsageError("linear: input width mismatch");
  Tensor<T> y(Shape{n, out, 1, 1, 1});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < out; ++o) {
      T acc = b.defined() ? b.value()[o] : T(0);
      for (int64_t k = 0; k < in; ++k) acc += w.value()[o * in + k] * x.value()[i * in + k];
      y[i * out + o] = acc;
    }
  auto xn = x.shared(), wn = w.shared(), bn = b.shared();
  return make_result(std::move(y), {x, w, b}, [xn, wn, bn, n, in, out](Node<T>& self) {
    Tensor<T>* dx = grad_target(xn);
    Tensor<T>* dw = grad_target(wn);
    Tensor<T>* db = grad_target(bn);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) {
        const T g = self.grad[i * out + o];
        if (db) (*db)[o] += g;
        for (int64_t k = 0; k < in; ++k) {
          if (dw) (*dw)[o * in + k] += g * xn->value[i * in + k];
          if (dx) (*dx)[i * in + k] += g * wn->value[o * in + k];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Self-attention over flattened spatial positions.
//
// Per sample, with X (C x P): F = Wq X + bq, G = Wk X + bk (C' x P),
// H = Wv X + bv (C x P), A = rowsoftmax(F^T G) (P x P), O = H A^T,
// out = X + gamma * O.

template <class T>
struct AttentionWeights {
  Var<T> wq, bq, wk, bk, wv, bv, gamma;
};

namespace detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using CMap = Eigen::Map<const Mat<T>>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct AttentionCache {
  Mat<T> f, g, h, a, o;
};

template <class T>
AttentionCache<T> attention_forward(const T* x, int64_t c, int64_t p, const AttentionWeights<T>& aw) {
  const int64_t cr = aw.wq.shape().n;
  const CMap<T> xm(x, c, p);
  const CMap<T> wq(aw.wq.value().ptr(), cr, c), wk(aw.wk.value().ptr(), cr, c), wv(aw.wv.value().ptr(), c, c);
  const Eigen::Map<const Vec<T>> bq(aw.bq.value().ptr(), cr), bk(aw.bk.value().ptr(), cr), bv(aw.bv.value().ptr(), c);
  AttentionCache<T> r;
  r.f = (wq * xm).colwise() + bq;
  r.g = (wk * xm).colwise() + bk;
  r.h = (wv * xm).colwise() + bv;
  r.a = r.f.transpose() * r.g;
  for (int64_t i = 0; i < p; ++i) {
    auto row = r.a.row(i);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  r.o = r.h * r.a.transpose();
  return r;
}

}  // namespace detail

// Row-stochastic attention matrix (P x P) of sample n, for inspection.
template <class T>
detail::Mat<T> attention_map(const Tensor<T>& x, const AttentionWeights<T>& aw, int64_t n = 0) {
  return detail::attention_forward(x.channel(n, 0), x.shape.c, x.shape.spatial(), aw).a;
}

template <class T>
Var<T> self_attention(const Var<T>& x, const AttentionWeights<T>& aw) {
  const Shape s = x.shape();
  const int64_t c = s.c, p = s.spatial();
  auto caches = std::make_shared<std::vector<detail::AttentionCache<T>>>();
  Tensor<T> y(s);
  const T gamma = aw.gamma.value()[0];
  for (int64_t n = 0; n < s.n; ++n) {
    caches->push_back(detail::attention_forward(x.value().channel(n, 0), c, p, aw));
    const auto& o = caches->back().o;
    const T* xp = x.value().channel(n, 0);
    T* yp = y.channel(n, 0);
    for (int64_t i = 0; i < c * p; ++i) yp[i] = xp[i] + gamma * o.data()[i];
  }
  auto xn = x.shared();
  auto keep = aw;
  return make_result(
      std::move(y), {x, aw.wq, aw.bq, aw.wk, aw.bk, aw.wv, aw.bv, aw.gamma}, [xn, keep, caches, c, p](Node<T>& self) {
        using detail::Mat;
        const int64_t cr = keep.wq.shape().n;
        const T gamma = keep.gamma.value()[0];
        const detail::CMap<T> wq(keep.wq.value().ptr(), cr, c), wk(keep.wk.value().ptr(), cr, c),
            wv(keep.wv.value().ptr(), c, c);
        Tensor<T>* dx = grad_target(xn);
        auto target = [](const Var<T>& v) { return grad_target(v.shared()); };
        Tensor<T>*dwq = target(keep.wq), *dbq = target(keep.bq), *dwk = target(keep.wk), *dbk = target(keep.bk),
        *dwv = target(keep.wv), *dbv = target(keep.bv), *dgamma = target(keep.gamma);
        for (int64_t n = 0; n < xn->value.shape.n; ++n) {
          const auto& cache = (*caches)[static_cast<size_t>(n)];
          const detail::CMap<T> xm(xn->value.channel(n, 0), c, p);
          const detail::CMap<T> dy(self.grad.channel(n, 0), c, p);
          if (dgamma) (*dgamma)[0] += (dy.array() * cache.o.array()).sum();
          const Mat<T> d_o = gamma * dy;
          const Mat<T> dh = d_o * cache.a;
          const Mat<T> da = d_o.transpose() * cache.h;
          Mat<T> ds = da;
          for (int64_t i = 0; i < p; ++i) {
            const T dot = (cache.a.row(i).array() * da.row(i).array()).sum();
            ds.row(i) = cache.a.row(i).array() * (da.row(i).array() - dot);
          }
          const Mat<T> df = cache.g * ds.transpose();
          const Mat<T> dg = cache.f * ds;
          auto acc_w = [&](Tensor<T>* dw, Tensor<T>* db, const Mat<T>& d, int64_t rows) {
            if (dw) {
              Eigen::Map<Mat<T>> m(dw->ptr(), rows, c);
              m.noalias() += d * xm.transpose();
            }
            if (db) {
              Eigen::Map<detail::Vec<T>> v(db->ptr(), rows);
              v += d.rowwise().sum();
            }
          };
          acc_w(dwq, dbq, df, cr);
          acc_w(dwk, dbk, dg, cr);
          acc_w(dwv, dbv, dh, c);
          if (dx) {
            Eigen::Map<Mat<T>> dxm(dx->channel(n, 0), c, p);
            dxm += dy;
            dxm.noalias() += wq.transpose() * df;
            dxm.noalias() += wk.transpose() * dg;
            dxm.noalias() += wv.transpose() * dh;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses (scalar results, shape (1,1,1,1,1))

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) throw UsageError("mean_abs_diff: shape mismatch");
  double acc = 0;
  for (int64_t i = 0; i < a.value().size(); ++i) acc += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
  const double m = static_cast<double>(a.value().size());
  auto an = a.shared(), bn = b.shared();
  return make_result(Tensor<T>(Shape{}, static_cast<T>(acc / m)), {a, b}, [an, bn, m](Node<T>& self) {
    const T g = static_cast<T>(self.grad[0] / m);
    Tensor<T>* da = grad_target(an);
    Tensor<T>* db = grad_target(bn);
    for (int64_t i = 0; i < an->value.size(); ++i) {
      const T d = an->value[i] - bn->value[i];
      const T sg = d > 0 ? g : (d < 0 ? -g : T(0));
      if (da) (*da)[i] += sg;
      if (db) (*db)[i] -= sg;
    }
  });
}

template <class T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
  if (!(a.shape() == b.shape())) throw UsageError("mean_sq_diff: shape mismatch");
  double acc = 0;
  for (int64_t i = 0; i < a.value().size(); ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    acc += d * d;
  }
  const double m = static_cast<double>(a.value().size());
  auto an = a.shared(), bn = b.shared();
  return make_result(Tensor<T>(Shape{}, static_cast<T>(acc / m)), {a, b}, [an, bn, m](Node<T>& self) {
    const T g = static_cast<T>(2.0 * self.grad[0] / m);
    Tensor<T>* da = grad_target(an);
    Tensor<T>* db = grad_target(bn);
    for (int64_t i = 0; i < an->value.size(); ++i) {
      const T d = g * (an->value[i] - bn->value[i]);
      if (da) (*da)[i] += d;
      if (db) (*db)[i] -= d;
    }
  });
}

// mean_i -log(clamp(p_i, eps, 1 - eps)), or -log(1 - clamp(p_i)) when `complement`.
template <class T>
Var<T> mean_neg_log(const Var<T>& p, bool complement, double eps) {
  const int64_t m = p.value().size();
  double acc = 0;
  for (int64_t i = 0; i < m; ++i) {
    const double q = std::clamp(static_cast<double>(p.value()[i]), eps, 1.0 - eps);
    acc -= std::log(complement ? 1.0 - q : q);
  }
  auto pn = p.shared();
  return make_result(Tensor<T>(Shape{}, static_cast<T>(acc / static_cast<double>(m))), {p},
                     [pn, complement, eps, m](Node<T>& self) {
                       Tensor<T>& dp = pn->grad_buffer();
                       const double g = self.grad[0] / static_cast<double>(m);
                       for (int64_t i = 0; i < m; ++i) {
                         const double v = pn->value[i];
                         if (v < eps || v > 1.0 - eps) continue;
                         dp[i] += static_cast<T>(complement ? g / (1.0 - v) : -g / v);
                       }
                     });
}

}  // namespace vts::nn
