#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "geomask/nn.hpp"

using namespace geomask;
using T = Tensor<double>;
using P = Parameter<double>;

namespace {

std::mt19937_64& gen() {
  static std::mt19937_64 g(12345);
  return g;
}

void fill(Eigen::VectorXd& v) {
  std::normal_distribution<double> d(0, 1);
  for (auto& x : v) x = d(gen());
}

T random_tensor(int n, int c, int h, int w) {
  T t(n, c, h, w);
  fill(t.flat());
  return t;
}

P random_param(const std::string& name, std::vector<std::int64_t> shape) {
  P p(name, std::move(shape));
  fill(p.value);
  return p;
}

double dot(const T& a, const T& b) { return a.flat().dot(b.flat()); }

// Central differences of sum(r * f()) with respect to each entry of v.
Eigen::VectorXd numeric_grad(Eigen::VectorXd& v, const T& r, const std::function<T()>& f) {
  const double h = 1e-6;
  Eigen::VectorXd g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + h;
    const double up = dot(f(), r);
    v[i] = keep - h;
    const double down = dot(f(), r);
    v[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void expect_close(const Eigen::VectorXd& got, const Eigen::VectorXd& want, double tol = 1e-6) {
  ASSERT_EQ(got.size(), want.size());
  for (Eigen::Index i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], tol) << "index " << i;
}

double conv_ref(const T& x, const P& w, const P& b, int k, int pad, int n, int o, int y, int xx) {
  double acc = b.value[o];
  for (int i = 0; i < x.c(); ++i)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const int sy = y + ky - pad, sx = xx + kx - pad;
        if (sy < 0 || sx < 0 || sy >= x.h() || sx >= x.w()) continue;
        acc += w.value[((o * x.c() + i) * k + ky) * k + kx] * x(n, i, sy, sx);
      }
  return acc;
}

double upsample_ref(const T& x, int n, int c, int oy, int ox) {
  auto coord = [](int o, int len, int& i0, int& i1, double& f) {
    double s = (o + 0.5) / 2 - 0.5;
    s = std::clamp(s, 0.0, double(len - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, len - 1);
    f = s - i0;
  };
  int y0, y1, x0, x1;
  double fy, fx;
  coord(oy, x.h(), y0, y1, fy);
  coord(ox, x.w(), x0, x1, fx);
  return (1 - fy) * ((1 - fx) * x(n, c, y0, x0) + fx * x(n, c, y0, x1)) +
         fy * ((1 - fx) * x(n, c, y1, x0) + fx * x(n, c, y1, x1));
}

}  // namespace

TEST(Conv2d, MatchesDirectSum) {
  for (auto [k, pad] : {std::pair{3, 1}, std::pair{1, 0}}) {
    const T x = random_tensor(2, 3, 7, 5);
    const P w = random_param("w", {4, 3, k, k}), b = random_param("b", {4});
    T y;
    nn::conv2d_forward(x, w, b, k, pad, y);
    const int oh = 7 + 2 * pad - k + 1, ow = 5 + 2 * pad - k + 1;
    ASSERT_EQ(y.shape(), (Shape4{2, 4, oh, ow}));
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < 4; ++o)
        for (int yy = 0; yy < oh; ++yy)
          for (int xx = 0; xx < ow; ++xx)
            ASSERT_NEAR(y(n, o, yy, xx), conv_ref(x, w, b, k, pad, n, o, yy, xx), 1e-10);
  }
  const T x = random_tensor(1, 3, 7, 5);
  const P w = random_param("w", {4, 3, 3, 3}), b = random_param("b", {4});
  T y;
  EXPECT_THROW(nn::conv2d_forward(x, w, b, 3, 0, y), Error);
}

TEST(Conv2d, LargeInputSpansSeveralColumnChunks) {
  const T x = random_tensor(1, 2, 300, 260);
  const P w = random_param("w", {3, 2, 3, 3}), b = random_param("b", {3});
  T y;
  nn::conv2d_forward(x, w, b, 3, 1, y);
  std::uniform_int_distribution<int> ry(0, 299), rx(0, 259);
  for (int t = 0; t < 500; ++t) {
    const int yy = ry(gen()), xx = rx(gen());
    for (int o = 0; o < 3; ++o) ASSERT_NEAR(y(0, o, yy, xx), conv_ref(x, w, b, 3, 1, 0, o, yy, xx), 1e-10);
  }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  T x = random_tensor(2, 2, 5, 4);
  P w = random_param("w", {3, 2, 3, 3}), b = random_param("b", {3});
  T y;
  nn::conv2d_forward(x, w, b, 3, 1, y);
  const T r = random_tensor(2, 3, 5, 4);
  T dx;
  w.grad.setZero();
  b.grad.setZero();
  nn::conv2d_backward(x, r, w, b, 3, 1, &dx);
  auto f = [&] {
    T out;
    nn::conv2d_forward(x, w, b, 3, 1, out);
    return out;
  };
  expect_close(dx.flat(), numeric_grad(x.flat(), r, f));
  expect_close(w.grad, numeric_grad(w.value, r, f));
  expect_close(b.grad, numeric_grad(b.value, r, f));

  // Gradients accumulate across calls.
  const Eigen::VectorXd once = w.grad;
  nn::conv2d_backward(x, r, w, b, 3, 1, static_cast<T*>(nullptr));
  expect_close(w.grad, 2 * once, 1e-9);
}

TEST(Relu, ForwardAndBackward) {
  T x = random_tensor(1, 2, 3, 3);
  const T orig = x;
  nn::relu_inplace(x);
  T dy = random_tensor(1, 2, 3, 3);
  const T dy0 = dy;
  nn::relu_backward(x, dy);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x.data()[i], std::max(0.0, orig.data()[i]));
    EXPECT_EQ(dy.data()[i], orig.data()[i] > 0 ? dy0.data()[i] : 0.0);
  }
}

TEST(MaxPool, ForwardBackward) {
  T x = random_tensor(2, 3, 6, 4);
  T y;
  std::vector<std::int64_t> arg;
  nn::maxpool2_forward(x, y, arg);
  ASSERT_EQ(y.shape(), (Shape4{2, 3, 3, 2}));
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 2; ++ox)
          EXPECT_EQ(y(n, c, oy, ox), std::max({x(n, c, 2 * oy, 2 * ox), x(n, c, 2 * oy + 1, 2 * ox),
                                               x(n, c, 2 * oy, 2 * ox + 1), x(n, c, 2 * oy + 1, 2 * ox + 1)}));
  const T r = random_tensor(2, 3, 3, 2);
  T dx;
  nn::maxpool2_backward(r, arg, x.shape(), dx);
  auto f = [&] {
    T out;
    std::vector<std::int64_t> a;
    nn::maxpool2_forward(x, out, a);
    return out;
  };
  expect_close(dx.flat(), numeric_grad(x.flat(), r, f));
  T odd(1, 1, 3, 4);
  EXPECT_THROW(nn::maxpool2_forward(odd, y, arg), Error);
}

TEST(Upsample, MatchesHalfPixelBilinear) {
  T x = random_tensor(1, 2, 3, 5);
  T y;
  nn::upsample2x_forward(x, y);
  ASSERT_EQ(y.shape(), (Shape4{1, 2, 6, 10}));
  for (int c = 0; c < 2; ++c)
    for (int oy = 0; oy < 6; ++oy)
      for (int ox = 0; ox < 10; ++ox) ASSERT_NEAR(y(0, c, oy, ox), upsample_ref(x, 0, c, oy, ox), 1e-12);
  const T r = random_tensor(1, 2, 6, 10);
  T dx;
  nn::upsample2x_backward(r, dx);
  auto f = [&] {
    T out;
    nn::upsample2x_forward(x, out);
    return out;
  };
  expect_close(dx.flat(), numeric_grad(x.flat(), r, f));
}

TEST(Upsample, ConstantStaysConstant) {
  T x(1, 1, 4, 4, 0.7);
  T y;
  nn::upsample2x_forward(x, y);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.data()[i], 0.7, 1e-15);
}

TEST(Concat, SplitInvertsConcat) {
  const T a = random_tensor(2, 3, 4, 4), b = random_tensor(2, 2, 4, 4);
  T y, da, db;
  nn::concat_channels(a, b, y);
  ASSERT_EQ(y.shape(), (Shape4{2, 5, 4, 4}));
  EXPECT_EQ(y(1, 3, 2, 1), b(1, 0, 2, 1));
  EXPECT_EQ(y(1, 2, 2, 1), a(1, 2, 2, 1));
  nn::split_channels(y, 3, da, db);
  EXPECT_EQ(da.flat(), a.flat());
  EXPECT_EQ(db.flat(), b.flat());
}

TEST(AdaptiveAvgPool, WindowsAndGradient) {
  T x = random_tensor(1, 2, 8, 8);
  T y;
  nn::adaptive_avgpool_forward(x, 7, y);
  ASSERT_EQ(y.shape(), (Shape4{1, 2, 7, 7}));
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        const int y0 = i * 8 / 7, y1 = ((i + 1) * 8 + 6) / 7, x0 = j * 8 / 7, x1 = ((j + 1) * 8 + 6) / 7;
        double s = 0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) s += x(0, c, yy, xx);
        ASSERT_NEAR(y(0, c, i, j), s / ((y1 - y0) * (x1 - x0)), 1e-12);
      }
  const T r = random_tensor(1, 2, 7, 7);
  T dx;
  nn::adaptive_avgpool_backward(r, x.shape(), dx);
  auto f = [&] {
    T out;
    nn::adaptive_avgpool_forward(x, 7, out);
    return out;
  };
  expect_close(dx.flat(), numeric_grad(x.flat(), r, f));

  // Upsampling case: 4 -> 7 replicates.
  T small = random_tensor(1, 1, 4, 4), big;
  nn::adaptive_avgpool_forward(small, 7, big);
  EXPECT_NEAR(big(0, 0, 0, 0), small(0, 0, 0, 0), 1e-12);
  EXPECT_NEAR(big(0, 0, 6, 6), small(0, 0, 3, 3), 1e-12);
}

TEST(Linear, ForwardBackward) {
  T x = random_tensor(3, 2, 2, 2);
  P w = random_param("w", {5, 8}), b = random_param("b", {5});
  T y;
  nn::linear_forward(x, w, b, y);
  ASSERT_EQ(y.shape(), (Shape4{3, 5, 1, 1}));
  for (int n = 0; n < 3; ++n)
    for (int o = 0; o < 5; ++o) {
      double s = b.value[o];
      for (int i = 0; i < 8; ++i) s += w.value[o * 8 + i] * x.data()[n * 8 + i];
      ASSERT_NEAR(y(n, o, 0, 0), s, 1e-12);
    }
  const T r = random_tensor(3, 5, 1, 1);
  T dx;
  w.grad.setZero();
  b.grad.setZero();
  nn::linear_backward(x, r, w, b, &dx);
  auto f = [&] {
    T out;
    nn::linear_forward(x, w, b, out);
    return out;
  };
  expect_close(dx.flat(), numeric_grad(x.flat(), r, f));
  expect_close(w.grad, numeric_grad(w.value, r, f));
  expect_close(b.grad, numeric_grad(b.value, r, f));
}

TEST(Dropout, InvertedScalingAndRate) {
  T x(1, 1, 100, 100, 1.0), mask;
  Rng rng(4);
  nn::dropout_forward(x, 0.5, rng, mask);
  int zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    ASSERT_TRUE(v == 0.0 || v == 2.0);
    ASSERT_EQ(v, mask.data()[i]);
    zeros += v == 0.0;
  }
  EXPECT_NEAR(zeros / 10000.0, 0.5, 0.03);
  EXPECT_NEAR(x.flat().mean(), 1.0, 0.06);
}

TEST(Dropout, ZeroRateIsIdentity) {
  T x = random_tensor(1, 1, 4, 4), mask;
  const T keep = x;
  Rng rng(1);
  nn::dropout_forward(x, 0.0, rng, mask);
  EXPECT_EQ(x.flat(), keep.flat());
}
