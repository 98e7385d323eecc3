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

#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vts/nn/ops.hpp"

namespace {

using namespace vts::nn;
using gradcheck::random_tensor;
using V = std::vector<Var<double>>;

constexpr double kGradTol = 1e-6;

// Direct 7-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, const ConvGeom& g) {
  const Shape s = x.shape;
  const int64_t k = g.kernel, co = w.shape.n;
  Shape so{s.n, co, g.out_len(s.d), g.out_len(s.h), g.out_len(s.w)};
  Tensor<double> y(so);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t z = 0; z < so.d; ++z)
        for (int64_t yy = 0; yy < so.h; ++yy)
          for (int64_t xx = 0; xx < so.w; ++xx) {
            double acc = b ? (*b)[o] : 0.0;
            for (int64_t c = 0; c < s.c; ++c)
              for (int64_t a = 0; a < k; ++a)
                for (int64_t bb = 0; bb < k; ++bb)
                  for (int64_t e = 0; e < k; ++e) {
                    const int64_t iz = z * g.stride - g.pad_lo + a, iy = yy * g.stride - g.pad_lo + bb,
                                  ix = xx * g.stride - g.pad_lo + e;
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= s.d || iy >= s.h || ix >= s.w) continue;
                    acc += w[(((o * s.c + c) * k + a) * k + bb) * k + e] *
                           x[(((n * s.c + c) * s.d + iz) * s.h + iy) * s.w + ix];
                  }
            y[(((n * co + o) * so.d + z) * so.h + yy) * so.w + xx] = acc;
          }
  return y;
}

// Scatter form of the transposed convolution.
Tensor<double> naive_convt(const Tensor<double>& x, const Tensor<double>& w, const ConvGeom& g) {
  const Shape s = x.shape;
  const int64_t k = g.kernel, co = w.shape.c;
  Shape so{s.n, co, g.in_len(s.d), g.in_len(s.h), g.in_len(s.w)};
  Tensor<double> y(so);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t z = 0; z < s.d; ++z)
        for (int64_t yy = 0; yy < s.h; ++yy)
          for (int64_t xx = 0; xx < s.w; ++xx) {
            const double v = x[(((n * s.c + c) * s.d + z) * s.h + yy) * s.w + xx];
            for (int64_t o = 0; o < co; ++o)
              for (int64_t a = 0; a < k; ++a)
                for (int64_t bb = 0; bb < k; ++bb)
                  for (int64_t e = 0; e < k; ++e) {
                    const int64_t oz = z * g.stride - g.pad_lo + a, oy = yy * g.stride - g.pad_lo + bb,
                                  ox = xx * g.stride - g.pad_lo + e;
                    if (oz < 0 || oy < 0 || ox < 0 || oz >= so.d || oy >= so.h || ox >= so.w) continue;
                    y[(((n * co + o) * so.d + oz) * so.h + oy) * so.w + ox] +=
                        v * w[(((c * co + o) * k + a) * k + bb) * k + e];
                  }
          }
  return y;
}

double max_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape, b.shape);
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct GeomCase {
  int kernel, stride, lo, hi;
};

class ConvGeomTest : public ::testing::TestWithParam<GeomCase> {};

TEST_P(ConvGeomTest, ForwardMatchesDirectLoops) {
  const auto c = GetParam();
  const ConvGeom g{c.kernel, c.stride, c.lo, c.hi};
  const auto x = random_tensor(Shape{2, 3, 6, 5, 7}, 1);
  const auto w = random_tensor(Shape{4, 3, c.kernel, c.kernel, c.kernel}, 2);
  const auto b = random_tensor(Shape{1, 4, 1, 1, 1}, 3);
  EXPECT_LT(max_diff(conv3d_forward(x, w, b.ptr(), g), naive_conv(x, w, &b, g)), 1e-12);
  const auto wt = random_tensor(Shape{3, 2, c.kernel, c.kernel, c.kernel}, 4);
  EXPECT_LT(max_diff(conv_transpose3d_forward(x, wt, static_cast<const double*>(nullptr), g), naive_convt(x, wt, g)), 1e-12);
}

TEST_P(ConvGeomTest, ConvGradients) {
  const auto c = GetParam();
  const ConvGeom g{c.kernel, c.stride, c.lo, c.hi};
  auto r = gradcheck::check([&](V& v) { return conv3d(v[0], v[1], v[2], g); },
                            {random_tensor(Shape{2, 2, 5, 4, 6}, 5), random_tensor(Shape{3, 2, c.kernel, c.kernel, c.kernel}, 6),
                             random_tensor(Shape{1, 3, 1, 1, 1}, 7)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

TEST_P(ConvGeomTest, TransposedConvGradients) {
  const auto c = GetParam();
  const ConvGeom g{c.kernel, c.stride, c.lo, c.hi};
  auto r = gradcheck::check([&](V& v) { return conv_transpose3d(v[0], v[1], v[2], g); },
                            {random_tensor(Shape{2, 2, 3, 2, 3}, 8), random_tensor(Shape{2, 3, c.kernel, c.kernel, c.kernel}, 9),
                             random_tensor(Shape{1, 3, 1, 1, 1}, 10)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvGeomTest,
                         ::testing::Values(GeomCase{3, 1, 1, 1}, GeomCase{4, 2, 1, 1}, GeomCase{4, 1, 1, 2},
                                           GeomCase{1, 1, 0, 0}, GeomCase{3, 2, 0, 1}));

TEST(ConvBlocking, ManyPlaneBlocksAgreeWithSingleBlock) {
  // Large enough that the column buffer is split into several z blocks.
  const ConvGeom g{3, 1, 1, 1};
  const auto x = random_tensor(Shape{1, 8, 40, 40, 40}, 11).cast<float>();
  const auto w = random_tensor(Shape{2, 8, 3, 3, 3}, 12).cast<float>();
  EXPECT_GT(40, detail::planes_per_block(8 * 27, 40 * 40, 40));
  const auto y = conv3d_forward(x, w, static_cast<const float*>(nullptr), g).cast<double>();
  const auto ref = naive_conv(x.cast<double>(), w.cast<double>(), nullptr, g);
  EXPECT_LT(max_diff(y, ref), 1e-4);
}

TEST(Ops, BatchNormTrainingGradients) {
  RunningStats<double> stats(3);
  auto r = gradcheck::check([&](V& v) { return batch_norm(v[0], v[1], v[2], stats, true); },
                            {random_tensor(Shape{2, 3, 3, 2, 2}, 13), random_tensor(Shape{1, 3, 1, 1, 1}, 14, 0.5, 1.5),
                             random_tensor(Shape{1, 3, 1, 1, 1}, 15)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

TEST(Ops, BatchNormEvalGradients) {
  RunningStats<double> stats(2);
  stats.mean[0] = 0.3;
  stats.var[1] = 2.0;
  auto r = gradcheck::check([&](V& v) { return batch_norm(v[0], v[1], v[2], stats, false); },
                            {random_tensor(Shape{1, 2, 2, 2, 2}, 16), random_tensor(Shape{1, 2, 1, 1, 1}, 17),
                             random_tensor(Shape{1, 2, 1, 1, 1}, 18)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

TEST(Ops, BatchNormStatistics) {
  RunningStats<double> stats(1);
  Tensor<double> x(Shape{1, 1, 1, 1, 4}, std::vector<double>{1, 2, 3, 6});
  auto y = batch_norm(leaf(x), leaf(Tensor<double>(Shape{}, 1.0)), leaf(Tensor<double>(Shape{}, 0.0)), stats, true);
  // mean 3, biased variance 3.5, unbiased 14/3
  EXPECT_NEAR(y.value()[3], 3.0 / std::sqrt(3.5 + 1e-5), 1e-12);
  EXPECT_NEAR(stats.mean[0], 0.3, 1e-12);
  EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-12);
  Tensor<double> single(Shape{1, 1, 1, 1, 1});
  EXPECT_THROW(batch_norm(leaf(single), leaf(Tensor<double>(Shape{}, 1.0)), leaf(Tensor<double>(Shape{}, 0.0)), stats, true),
               vts::UsageError);
}

TEST(Ops, PointwiseGradients) {
  const auto x = random_tensor(Shape{1, 2, 3, 3, 3}, 19);
  EXPECT_LT(gradcheck::check([](V& v) { return leaky_relu(v[0], 0.2); }, {x}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return sigmoid(v[0]); }, {x}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return vts::nn::tanh(v[0]); }, {x}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return clip(v[0], -0.5, 0.5); }, {x}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return scale(add(v[0], v[1]), 1.7); }, {x, random_tensor(x.shape, 20)}).max_abs_err,
            kGradTol);
}

TEST(Ops, ClipPassesGradientOnClosedRange) {
  Tensor<double> x(Shape{1, 1, 1, 1, 4}, std::vector<double>{-2, -1, 1, 2});
  auto v = leaf(x, true);
  auto y = clip(v, -1.0, 1.0);
  backward(gradcheck::probe_sum(y, Tensor<double>(x.shape, 1.0)));
  EXPECT_EQ(v.grad().data, (AlignedVector<double>{0, 1, 1, 0}));
}

TEST(Ops, ConcatAndResizeGradients) {
  auto r = gradcheck::check([](V& v) { return concat_channels(v[0], v[1]); },
                            {random_tensor(Shape{2, 1, 2, 3, 2}, 21), random_tensor(Shape{2, 3, 2, 3, 2}, 22)});
  EXPECT_LT(r.max_abs_err, kGradTol);
  r = gradcheck::check([](V& v) { return upsample_trilinear(v[0], 5, 4, 7); }, {random_tensor(Shape{1, 2, 2, 3, 3}, 23)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

TEST(Ops, UpsampleDoublingMatchesHalfPixelRule) {
  Tensor<double> x(Shape{1, 1, 1, 1, 2}, std::vector<double>{0, 4});
  auto y = upsample_trilinear(leaf(x), 1, 1, 4);
  EXPECT_EQ(y.value().data, (AlignedVector<double>{0, 1, 3, 4}));
  auto same = upsample_trilinear(leaf(x), 1, 1, 2);
  EXPECT_EQ(same.value().data, x.data);
}

TEST(Ops, PoolLinearGradients) {
  auto r = gradcheck::check([](V& v) { return linear(global_avg_pool(v[0]), v[1], v[2]); },
                            {random_tensor(Shape{2, 3, 2, 2, 2}, 24), random_tensor(Shape{2, 3, 1, 1, 1}, 25),
                             random_tensor(Shape{1, 2, 1, 1, 1}, 26)});
  EXPECT_LT(r.max_abs_err, kGradTol);
}

AttentionWeights<double> attention_leaves(V& v) { return {v[1], v[2], v[3], v[4], v[5], v[6], v[7]}; }

std::vector<Tensor<double>> attention_inputs(int64_t c, int64_t cr) {
  return {random_tensor(Shape{2, c, 2, 2, 2}, 27),       random_tensor(Shape{cr, c, 1, 1, 1}, 28),
          random_tensor(Shape{1, cr, 1, 1, 1}, 29),      random_tensor(Shape{cr, c, 1, 1, 1}, 30),
          random_tensor(Shape{1, cr, 1, 1, 1}, 31),      random_tensor(Shape{c, c, 1, 1, 1}, 32),
          random_tensor(Shape{1, c, 1, 1, 1}, 33),       Tensor<double>(Shape{}, 0.7)};
}

TEST(Ops, SelfAttentionGradients) {
  auto r = gradcheck::check([](V& v) { return self_attention(v[0], attention_leaves(v)); }, attention_inputs(8, 1));
  EXPECT_LT(r.max_abs_err, kGradTol);
}

TEST(Ops, SelfAttentionMatchesDirectFormula) {
  auto in = attention_inputs(4, 2);
  V v;
  for (auto& t : in) v.push_back(leaf(t));
  const auto aw = attention_leaves(v);
  auto y = self_attention(v[0], aw);
  const int64_t c = 4, cr = 2, p = 8;
  for (int64_t n = 0; n < 2; ++n) {
    const double* x = in[0].channel(n, 0);
    auto proj = [&](const Tensor<double>& w, const Tensor<double>& b, int64_t rows, int64_t r, int64_t j) {
      double acc = b[r];
      for (int64_t k = 0; k < c; ++k) acc += w[r * c + k] * x[k * p + j];
      (void)rows;
      return acc;
    };
    for (int64_t i = 0; i < p; ++i) {
      std::vector<double> s(p);
      double mx = -1e300, z = 0;
      for (int64_t j = 0; j < p; ++j) {
        for (int64_t r = 0; r < cr; ++r) s[j] += proj(in[1], in[2], cr, r, i) * proj(in[3], in[4], cr, r, j);
        mx = std::max(mx, s[j]);
      }
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (int64_t ch = 0; ch < c; ++ch) {
        double o = 0;
        for (int64_t j = 0; j < p; ++j) o += proj(in[5], in[6], c, ch, j) * s[j] / z;
        EXPECT_NEAR(y.value().channel(n, ch)[i], x[ch * p + i] + 0.7 * o, 1e-12);
      }
    }
    const auto a = attention_map(in[0], aw, n);
    for (int64_t i = 0; i < p; ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(Ops, LossGradients) {
  const auto a = random_tensor(Shape{1, 1, 3, 3, 3}, 34), b = random_tensor(Shape{1, 1, 3, 3, 3}, 35);
  EXPECT_LT(gradcheck::check([](V& v) { return mean_abs_diff(v[0], v[1]); }, {a, b}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return mean_sq_diff(v[0], v[1]); }, {a, b}).max_abs_err, kGradTol);
  const auto p = random_tensor(Shape{4, 1, 1, 1, 1}, 36, 0.05, 0.95);
  EXPECT_LT(gradcheck::check([](V& v) { return mean_neg_log(v[0], false, 1e-7); }, {p}).max_abs_err, kGradTol);
  EXPECT_LT(gradcheck::check([](V& v) { return mean_neg_log(v[0], true, 1e-7); }, {p}).max_abs_err, kGradTol);
}

TEST(Ops, NegLogClampsProbabilities) {
  Tensor<double> p(Shape{2, 1, 1, 1, 1}, std::vector<double>{0.0, 0.5});
  const double v = mean_neg_log(leaf(p), false, 1e-7).item();
  EXPECT_NEAR(v, 0.5 * (-std::log(1e-7) - std::log(0.5)), 1e-12);
  EXPECT_TRUE(std::isfinite(mean_neg_log(leaf(Tensor<double>(Shape{}, 1.0)), true, 1e-7).item()));
}

TEST(Autograd, NoGradGuardBuildsNoTape) {
  auto x = leaf(random_tensor(Shape{1, 1, 2, 2, 2}, 37), true);
  NoGradGuard guard;
  auto y = sigmoid(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autograd, SharedSubgraphAccumulates) {
  auto x = leaf(Tensor<double>(Shape{}, 0.3), true);
  auto y = add(x, scale(x, 2.0));
  backward(y);
  EXPECT_NEAR(x.grad()[0], 3.0, 1e-15);
}

}  // namespace
