#include "geomask/nn.hpp"

#include <algorithm>
#include <cmath>

namespace geomask::nn {
namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on im2col buffer elements per chunk; sized to stay in cache.
constexpr std::size_t kColBudget = std::size_t{1} << 16;

// Chunks cover whole output rows: columns [g0, g1) with g0, g1 multiples of w.
// Column g addresses sample g / (h*w), output pixel g % (h*w).
template <typename Scalar>
void im2col(const Tensor<Scalar>& x, int k, int pad, std::size_t g0, std::size_t g1, RowMatrix<Scalar>& cols) {
  const int c_in = x.c(), h = x.h(), w = x.w();
  const std::size_t hw = x.plane_size();
  cols.resize(static_cast<Eigen::Index>(c_in) * k * k, static_cast<Eigen::Index>(g1 - g0));
  for (int ci = 0; ci < c_in; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int lo = std::max(0, -dx), hi = std::min(w, w - dx);
        for (std::size_t g = g0; g < g1; g += static_cast<std::size_t>(w), row += w) {
          const std::size_t n = g / hw;
          const int iy = static_cast<int>((g % hw) / static_cast<std::size_t>(w)) + ky - pad;
          if (iy < 0 || iy >= h || lo >= hi) {
            std::fill(row, row + w, Scalar(0));
            continue;
          }
          const Scalar* src = x.data() + (n * c_in + ci) * hw + static_cast<std::size_t>(iy) * w + dx;
          std::fill(row, row + lo, Scalar(0));
          std::copy(src + lo, src + hi, row + lo);
          std::fill(row + hi, row + w, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, int k, int pad, std::size_t g0, std::size_t g1, Tensor<Scalar>& dx_t) {
  const int c_in = dx_t.c(), h = dx_t.h(), w = dx_t.w();
  const std::size_t hw = dx_t.plane_size();
  for (int ci = 0; ci < c_in; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = cols.row((ci * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int lo = std::max(0, -dx), hi = std::min(w, w - dx);
        for (std::size_t g = g0; g < g1; g += static_cast<std::size_t>(w), row += w) {
          const std::size_t n = g / hw;
          const int iy = static_cast<int>((g % hw) / static_cast<std::size_t>(w)) + ky - pad;
          if (iy < 0 || iy >= h) continue;
          Scalar* dst = dx_t.data() + (n * c_in + ci) * hw + static_cast<std::size_t>(iy) * w + dx;
          for (int ox = lo; ox < hi; ++ox) dst[ox] += row[ox];
        }
      }
    }
  }
}

std::size_t chunk_columns(std::size_t rows, int w) {
  const std::size_t width = static_cast<std::size_t>(w);
  const std::size_t cols = std::max<std::size_t>(256, kColBudget / std::max<std::size_t>(1, rows));
  return std::max(width, cols / width * width);
}

template <typename Scalar>
struct Scratch {
  RowMatrix<Scalar> cols, dcols, out;
};

template <typename Scalar>
Scratch<Scalar>& scratch() {
  thread_local Scratch<Scalar> s;
  return s;
}

template <typename Scalar>
void check_conv_shapes(const Tensor<Scalar>& x, const Parameter<Scalar>& weight, int k) {
  if (weight.shape.size() != 4 || weight.shape[1] != x.c() || weight.shape[2] != k || weight.shape[3] != k)
    throw Error(ErrorKind::ShapeMismatch, "conv2d weight " + weight.name + " does not match input " + to_string(x.shape()));
}

}  // namespace

template <typename Scalar>
void conv2d_forward(const Tensor<Scalar>& x, const Parameter<Scalar>& weight, const Parameter<Scalar>& bias, int k,
                    int pad, Tensor<Scalar>& y) {
  check_conv_shapes(x, weight, k);
  if (2 * pad != k - 1) throw Error(ErrorKind::ShapeMismatch, "only 'same' convolutions are supported");
  const int c_out = static_cast<int>(weight.shape[0]);
  const auto kk = static_cast<Eigen::Index>(x.c()) * k * k;
  y.reshape_discard({x.n(), c_out, x.h(), x.w()});
  Eigen::Map<const RowMatrix<Scalar>> wmat(weight.value.data(), c_out, kk);
  const std::size_t hw = x.plane_size();
  const std::size_t total = hw * x.n();
  const std::size_t step = chunk_columns(static_cast<std::size_t>(kk), x.w());
  auto& sc = scratch<Scalar>();
  auto& cols = sc.cols;
  auto& out = sc.out;
  for (std::size_t g0 = 0; g0 < total; g0 += step) {
    const std::size_t g1 = std::min(total, g0 + step);
    im2col(x, k, pad, g0, g1, cols);
    out.noalias() = wmat * cols;
    out.colwise() += bias.value;
    // scatter (c_out, len) back to NCHW
    std::size_t g = g0;
    while (g < g1) {
      const std::size_t n = g / hw, p = g % hw;
      const std::size_t stop = std::min(g1, (n + 1) * hw);
      const auto len = static_cast<Eigen::Index>(stop - g);
      auto dst = y.sample(static_cast<int>(n));
      dst.middleCols(static_cast<Eigen::Index>(p), len) = out.middleCols(static_cast<Eigen::Index>(g - g0), len);
      g = stop;
    }
  }
}

template <typename Scalar>
void conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Parameter<Scalar>& weight,
                     Parameter<Scalar>& bias, int k, int pad, Tensor<Scalar>* dx) {
  check_conv_shapes(x, weight, k);
  const int c_out = static_cast<int>(weight.shape[0]);
  const auto kk = static_cast<Eigen::Index>(x.c()) * k * k;
  Eigen::Map<const RowMatrix<Scalar>> wmat(weight.value.data(), c_out, kk);
  Eigen::Map<RowMatrix<Scalar>> wgrad(weight.grad.data(), c_out, kk);
  if (dx) {
    dx->reshape_discard(x.shape());
    dx->set_zero();
  }
  const std::size_t hw = x.plane_size();
  const std::size_t total = hw * x.n();
  const std::size_t step = chunk_columns(static_cast<std::size_t>(kk), x.w());
  auto& [cols, dcols, dout] = scratch<Scalar>();
  for (std::size_t g0 = 0; g0 < total; g0 += step) {
    const std::size_t g1 = std::min(total, g0 + step);
    dout.resize(c_out, static_cast<Eigen::Index>(g1 - g0));
    std::size_t g = g0;
    while (g < g1) {
      const std::size_t n = g / hw, p = g % hw;
      const std::size_t stop = std::min(g1, (n + 1) * hw);
      const auto len = static_cast<Eigen::Index>(stop - g);
      dout.middleCols(static_cast<Eigen::Index>(g - g0), len) =
          dy.sample(static_cast<int>(n)).middleCols(static_cast<Eigen::Index>(p), len);
      g = stop;
    }
    im2col(x, k, pad, g0, g1, cols);
    wgrad.noalias() += dout * cols.transpose();
    bias.grad += dout.rowwise().sum();
    if (dx) {
      dcols.noalias() = wmat.transpose() * dout;
      col2im_add(dcols, k, pad, g0, g1, *dx);
    }
  }
}

template <typename Scalar>
void relu_inplace(Tensor<Scalar>& x) {
  x.flat() = x.flat().cwiseMax(Scalar(0));
}

template <typename Scalar>
void relu_backward(const Tensor<Scalar>& y, Tensor<Scalar>& dy) {
  dy.flat() = (y.flat().array() > Scalar(0)).select(dy.flat(), Scalar(0));
}

template <typename Scalar>
void maxpool2_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y, std::vector<std::int64_t>& argmax) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw Error(ErrorKind::ShapeMismatch, "maxpool2 needs even extents");
  const int oh = x.h() / 2, ow = x.w() / 2;
  y.reshape_discard({x.n(), x.c(), oh, ow});
  argmax.resize(y.size());
  const Scalar* src = x.data();
  std::size_t o = 0;
  for (int nc = 0; nc < x.n() * x.c(); ++nc) {
    const std::int64_t base = static_cast<std::int64_t>(nc) * x.h() * x.w();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        std::int64_t best = base + (2 * oy) * x.w() + 2 * ox;
        const std::int64_t cand[3] = {best + 1, best + x.w(), best + x.w() + 1};
        for (std::int64_t c : cand)
          if (src[c] > src[best]) best = c;
        argmax[o] = best;
        y.data()[o] = src[best];
      }
    }
  }
}

template <typename Scalar>
void maxpool2_backward(const Tensor<Scalar>& dy, const std::vector<std::int64_t>& argmax, const Shape4& x_shape,
                       Tensor<Scalar>& dx) {
  dx.reshape_discard(x_shape);
  dx.set_zero();
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data()[argmax[o]] += dy.data()[o];
}

namespace {

struct Tap {
  int i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(int in) {
  std::vector<Tap> taps(2 * in);
  for (int o = 0; o < 2 * in; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const int i0 = static_cast<int>(src);
    const int i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - i0;
    taps[o] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

}  // namespace

template <typename Scalar>
void upsample2x_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y) {
  const int h = x.h(), w = x.w();
  y.reshape_discard({x.n(), x.c(), 2 * h, 2 * w});
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  for (int nc = 0; nc < x.n() * x.c(); ++nc) {
    const Scalar* src = x.data() + static_cast<std::size_t>(nc) * h * w;
    Scalar* dst = y.data() + static_cast<std::size_t>(nc) * 4 * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Tap& a = ty[oy];
      const Scalar* r0 = src + a.i0 * w;
      const Scalar* r1 = src + a.i1 * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Tap& b = tx[ox];
        const Scalar top = Scalar(b.w0) * r0[b.i0] + Scalar(b.w1) * r0[b.i1];
        const Scalar bot = Scalar(b.w0) * r1[b.i0] + Scalar(b.w1) * r1[b.i1];
        *dst++ = Scalar(a.w0) * top + Scalar(a.w1) * bot;
      }
    }
  }
}

template <typename Scalar>
void upsample2x_backward(const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
  const int h = dy.h() / 2, w = dy.w() / 2;
  dx.reshape_discard({dy.n(), dy.c(), h, w});
  dx.set_zero();
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  for (int nc = 0; nc < dy.n() * dy.c(); ++nc) {
    const Scalar* src = dy.data() + static_cast<std::size_t>(nc) * 4 * h * w;
    Scalar* dst = dx.data() + static_cast<std::size_t>(nc) * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Tap& a = ty[oy];
      Scalar* r0 = dst + a.i0 * w;
      Scalar* r1 = dst + a.i1 * w;
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Tap& b = tx[ox];
        const Scalar g = *src++;
        r0[b.i0] += Scalar(a.w0 * b.w0) * g;
        r0[b.i1] += Scalar(a.w0 * b.w1) * g;
        r1[b.i0] += Scalar(a.w1 * b.w0) * g;
        r1[b.i1] += Scalar(a.w1 * b.w1) * g;
      }
    }
  }
}

template <typename Scalar>
void concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Tensor<Scalar>& y) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw Error(ErrorKind::ShapeMismatch, "concat " + to_string(a.shape()) + " with " + to_string(b.shape()));
  y.reshape_discard({a.n(), a.c() + b.c(), a.h(), a.w()});
  for (int n = 0; n < a.n(); ++n) {
    auto dst = y.sample(n);
    dst.topRows(a.c()) = a.sample(n);
    dst.bottomRows(b.c()) = b.sample(n);
  }
}

template <typename Scalar>
void split_channels(const Tensor<Scalar>& dy, int channels_a, Tensor<Scalar>& da, Tensor<Scalar>& db) {
  da.reshape_discard({dy.n(), channels_a, dy.h(), dy.w()});
  db.reshape_discard({dy.n(), dy.c() - channels_a, dy.h(), dy.w()});
  for (int n = 0; n < dy.n(); ++n) {
    da.sample(n) = dy.sample(n).topRows(channels_a);
    db.sample(n) = dy.sample(n).bottomRows(dy.c() - channels_a);
  }
}

namespace {

std::pair<int, int> adaptive_window(int i, int in, int out) {
  const int start = (i * in) / out;
  const int end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

}  // namespace

template <typename Scalar>
void adaptive_avgpool_forward(const Tensor<Scalar>& x, int out, Tensor<Scalar>& y) {
  y.reshape_discard({x.n(), x.c(), out, out});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < out; ++oy) {
        const auto [y0, y1] = adaptive_window(oy, x.h(), out);
        for (int ox = 0; ox < out; ++ox) {
          const auto [x0, x1] = adaptive_window(ox, x.w(), out);
          Scalar acc = 0;
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix) acc += x(n, c, iy, ix);
          y(n, c, oy, ox) = acc / Scalar((y1 - y0) * (x1 - x0));
        }
      }
}

template <typename Scalar>
void adaptive_avgpool_backward(const Tensor<Scalar>& dy, const Shape4& x_shape, Tensor<Scalar>& dx) {
  dx.reshape_discard(x_shape);
  dx.set_zero();
  const int out = dy.h();
  for (int n = 0; n < dx.n(); ++n)
    for (int c = 0; c < dx.c(); ++c)
      for (int oy = 0; oy < out; ++oy) {
        const auto [y0, y1] = adaptive_window(oy, dx.h(), out);
        for (int ox = 0; ox < out; ++ox) {
          const auto [x0, x1] = adaptive_window(ox, dx.w(), out);
          const Scalar g = dy(n, c, oy, ox) / Scalar((y1 - y0) * (x1 - x0));
          for (int iy = y0; iy < y1; ++iy)
            for (int ix = x0; ix < x1; ++ix) dx(n, c, iy, ix) += g;
        }
      }
}

template <typename Scalar>
void linear_forward(const Tensor<Scalar>& x, const Parameter<Scalar>& weight, const Parameter<Scalar>& bias,
                    Tensor<Scalar>& y) {
  const auto in = static_cast<Eigen::Index>(x.sample_size());
  if (weight.shape.size() != 2 || weight.shape[1] != in)
    throw Error(ErrorKind::ShapeMismatch, "linear " + weight.name + " does not match input " + to_string(x.shape()));
  const auto out = static_cast<Eigen::Index>(weight.shape[0]);
  y.reshape_discard({x.n(), static_cast<int>(out), 1, 1});
  Eigen::Map<const RowMatrix<Scalar>> wmat(weight.value.data(), out, in);
  Eigen::Map<const RowMatrix<Scalar>> xin(x.data(), x.n(), in);
  Eigen::Map<RowMatrix<Scalar>> yout(y.data(), x.n(), out);
  yout.noalias() = xin * wmat.transpose();
  yout.rowwise() += bias.value.transpose();
}

template <typename Scalar>
void linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Parameter<Scalar>& weight,
                     Parameter<Scalar>& bias, Tensor<Scalar>* dx) {
  const auto in = static_cast<Eigen::Index>(x.sample_size());
  const auto out = static_cast<Eigen::Index>(weight.shape[0]);
  Eigen::Map<const RowMatrix<Scalar>> wmat(weight.value.data(), out, in);
  Eigen::Map<RowMatrix<Scalar>> wgrad(weight.grad.data(), out, in);
  Eigen::Map<const RowMatrix<Scalar>> xin(x.data(), x.n(), in);
  Eigen::Map<const RowMatrix<Scalar>> g(dy.data(), x.n(), out);
  wgrad.noalias() += g.transpose() * xin;
  bias.grad += g.colwise().sum().transpose();
  if (dx) {
    dx->reshape_discard(x.shape());
    Eigen::Map<RowMatrix<Scalar>> dxin(dx->data(), x.n(), in);
    dxin.noalias() = g * wmat;
  }
}

template <typename Scalar>
void dropout_forward(Tensor<Scalar>& x, double p, Rng& rng, Tensor<Scalar>& mask) {
  mask.reshape_discard(x.shape());
  const Scalar keep = Scalar(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < x.size(); ++i) mask.data()[i] = rng.uniform() < p ? Scalar(0) : keep;
  x.flat().array() *= mask.flat().array();
}

#define GEOMASK_INSTANTIATE_NN(S)                                                                                  \
  template void conv2d_forward<S>(const Tensor<S>&, const Parameter<S>&, const Parameter<S>&, int, int,            \
                                  Tensor<S>&);                                                                     \
  template void conv2d_backward<S>(const Tensor<S>&, const Tensor<S>&, Parameter<S>&, Parameter<S>&, int, int,     \
                                   Tensor<S>*);                                                                    \
  template void relu_inplace<S>(Tensor<S>&);                                                                       \
  template void relu_backward<S>(const Tensor<S>&, Tensor<S>&);                                                    \
  template void maxpool2_forward<S>(const Tensor<S>&, Tensor<S>&, std::vector<std::int64_t>&);                     \
  template void maxpool2_backward<S>(const Tensor<S>&, const std::vector<std::int64_t>&, const Shape4&,           \
                                     Tensor<S>&);                                                                  \
  template void upsample2x_forward<S>(const Tensor<S>&, Tensor<S>&);                                               \
  template void upsample2x_backward<S>(const Tensor<S>&, Tensor<S>&);                                              \
  template void concat_channels<S>(const Tensor<S>&, const Tensor<S>&, Tensor<S>&);                                \
  template void split_channels<S>(const Tensor<S>&, int, Tensor<S>&, Tensor<S>&);                                  \
  template void adaptive_avgpool_forward<S>(const Tensor<S>&, int, Tensor<S>&);                                    \
  template void adaptive_avgpool_backward<S>(const Tensor<S>&, const Shape4&, Tensor<S>&);                         \
  template void linear_forward<S>(const Tensor<S>&, const Parameter<S>&, const Parameter<S>&, Tensor<S>&);        \
  template void linear_backward<S>(const Tensor<S>&, const Tensor<S>&, Parameter<S>&, Parameter<S>&, Tensor<S>*); \
  template void dropout_forward<S>(Tensor<S>&, double, Rng&, Tensor<S>&);

GEOMASK_INSTANTIATE_NN(float)
GEOMASK_INSTANTIATE_NN(double)

}  // namespace geomask::nn
