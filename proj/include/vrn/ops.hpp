#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <utility>
#include <vector>

#include "vrn/common.hpp"
#include "vrn/flops.hpp"
#include "vrn/tape.hpp"
#include "vrn/tensor.hpp"

namespace vrn {

enum class ConvEngine { kIm2col, kDirect };

// Process-wide default; tests flip it to cross-check the two engines.
inline ConvEngine& default_conv_engine() {
  static ConvEngine e = ConvEngine::kIm2col;
  return e;
}

namespace detail {

template <typename T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;

// Column matrix layout: row (c*kh + ky)*kw + kx, column oy*wo + ox.
template <typename T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, T* col) {
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (((long long)c * kh + ky) * kw + kx) * ((long long)ho * wo);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          T* dst = row + (long long)oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + ((long long)c * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int kh, int kw, int stride,
                int pad, int ho, int wo, T* dx) {
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row =
            col + (((long long)c * kh + ky) * kw + kx) * ((long long)ho * wo);
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + (long long)oy * wo;
          T* dst = dx + ((long long)c * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

// Copies `x` viewed as (outer, n, inner) with the middle axis shifted by s:
// y[o][i][j] = x[o][i+s][j], zero where i+s falls outside [0,n).
template <typename T>
void shift_axis(const T* x, long long outer, long long n, long long inner,
                long long s, T* y) {
  long long lo = std::max<long long>(0, -s);
  long long hi = std::min<long long>(n, n - s);
  for (long long o = 0; o < outer; ++o) {
    const T* xs = x + o * n * inner;
    T* ys = y + o * n * inner;
    if (lo > 0) std::fill(ys, ys + lo * inner, T(0));
    if (hi > lo)
      std::memcpy(ys + lo * inner, xs + (lo + s) * inner,
                  (size_t)((hi - lo) * inner) * sizeof(T));
    if (hi < n) std::fill(ys + std::max(hi, lo) * inner, ys + n * inner, T(0));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d

// `b` may be a default-constructed (undefined) tensor for bias-free layers,
// e.g. convolutions whose output is renormalized before use.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 0,
                 ConvEngine engine = default_conv_engine()) {
  if (x.rank() != 3 || w.rank() != 4 || (b.defined() && b.rank() != 1))
    throw ConfigError(strfmt("conv2d: ranks (%d,%d,%d), want (3,4,1)", x.rank(),
                             w.rank(), b.defined() ? b.rank() : 1));
  const int cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const int cout = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  if (w.extent(1) != cin)
    throw ConfigError(strfmt("conv2d: weight expects %d input channels, got %d",
                             w.extent(1), cin));
  if (b.defined() && b.extent(0) != cout)
    throw ConfigError(
        strfmt("conv2d: bias length %d != %d output channels", b.extent(0), cout));
  if (kh != kw || kh % 2 == 0)
    throw ConfigError(strfmt("conv2d: kernel %dx%d must be square and odd", kh, kw));
  if (stride < 1 || pad < 0)
    throw ConfigError(strfmt("conv2d: stride %d, pad %d invalid", stride, pad));
  if (h + 2 * pad < kh || wd + 2 * pad < kw)
    throw ConfigError(strfmt("conv2d: input %dx%d too small for kernel %d pad %d",
                             h, wd, kh, pad));
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;

  Tensor<T> y({cout, ho, wo});
  const long long spatial = (long long)ho * wo;
  const long long krows = (long long)cin * kh * kw;

  if (engine == ConvEngine::kIm2col) {
    std::vector<T> col(krows * spatial);
    detail::im2col(x.data(), cin, h, wd, kh, kw, stride, pad, ho, wo, col.data());
    detail::MapCM<T> wm(w.data(), cout, krows);
    detail::MapCM<T> cm(col.data(), krows, spatial);
    detail::MapM<T> ym(y.data(), cout, spatial);
    ym.noalias() = wm * cm;
    if (b.defined())
      for (int c = 0; c < cout; ++c) ym.row(c).array() += b.data()[c];
  } else {
    const T* bp = b.defined() ? b.data() : nullptr;
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bp ? bp[co] : T(0);
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky) {
              int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              const T* xrow = x.data() + ((long long)ci * h + iy) * wd;
              const T* wrow =
                  w.data() + (((long long)co * cin + ci) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < wd) acc += xrow[ix] * wrow[kx];
              }
            }
          y.data()[((long long)co * ho + oy) * wo + ox] = acc;
        }
  }
  count_flops(2ull * cin * cout * kh * kw * (unsigned long long)spatial);

  std::vector<Tensor<T>> ins = {x, w};
  if (b.defined()) ins.push_back(b);
  maybe_record<T>(std::move(ins), y, [=]() {
    const long long spatial2 = spatial;
    if (engine == ConvEngine::kIm2col) {
      std::vector<T> col(krows * spatial2);
      detail::im2col(x.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                     col.data());
      detail::MapCM<T> gym(y.grad(), cout, spatial2);
      detail::MapCM<T> cm(col.data(), krows, spatial2);
      detail::MapM<T> gwm(w.grad(), cout, krows);
      gwm.noalias() += gym * cm.transpose();
      std::vector<T> gcol(krows * spatial2);
      detail::MapCM<T> wm(w.data(), cout, krows);
      detail::MapM<T> gcm(gcol.data(), krows, spatial2);
      gcm.noalias() = wm.transpose() * gym;
      detail::col2im_add(gcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                         x.grad());
      if (b.defined())
        for (int c = 0; c < cout; ++c) b.grad()[c] += gym.row(c).sum();
    } else {
      const T* gy = y.grad();
      T* gx = x.grad();
      T* gw = w.grad();
      T* gb = b.defined() ? b.grad() : nullptr;
      for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            T g = gy[((long long)co * ho + oy) * wo + ox];
            if (gb) gb[co] += g;
            for (int ci = 0; ci < cin; ++ci)
              for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                const T* xrow = x.data() + ((long long)ci * h + iy) * wd;
                T* gxrow = gx + ((long long)ci * h + iy) * wd;
                const T* wrow =
                    w.data() + (((long long)co * cin + ci) * kh + ky) * kw;
                T* gwrow = gw + (((long long)co * cin + ci) * kh + ky) * kw;
                for (int kx = 0; kx < kw; ++kx) {
                  int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wd) continue;
                  gxrow[ix] += g * wrow[kx];
                  gwrow[kx] += g * xrow[ix];
                }
              }
          }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// conv3d_flat: kernel extends along at most one axis (each extent 1 or 3),
// padding must preserve spatial dims (1 on a size-3 axis, 0 elsewhere).

template <typename T>
Tensor<T> conv3d_flat(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                      std::array<int, 3> pad) {
  if (x.rank() != 4 || w.rank() != 5 || (b.defined() && b.rank() != 1))
    throw ConfigError(strfmt("conv3d_flat: ranks (%d,%d,%d), want (4,5,1)",
                             x.rank(), w.rank(), b.defined() ? b.rank() : 1));
  const int cin = x.extent(0), d = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int cout = w.extent(0);
  const int k[3] = {w.extent(2), w.extent(3), w.extent(4)};
  if (w.extent(1) != cin)
    throw ConfigError(strfmt("conv3d_flat: weight expects %d input channels, got %d",
                             w.extent(1), cin));
  if (b.defined() && b.extent(0) != cout)
    throw ConfigError(strfmt("conv3d_flat: bias length %d != %d output channels",
                             b.extent(0), cout));
  int axis = -1;
  for (int i = 0; i < 3; ++i) {
    if (k[i] != 1 && k[i] != 3)
      throw ConfigError(strfmt("conv3d_flat: kernel %dx%dx%d not flat", k[0], k[1], k[2]));
    if (k[i] == 3) {
      if (axis >= 0)
        throw ConfigError(
            strfmt("conv3d_flat: kernel %dx%dx%d not flat", k[0], k[1], k[2]));
      axis = i;
    }
  }
  for (int i = 0; i < 3; ++i)
    if (pad[i] != (k[i] - 1) / 2)
      throw ConfigError(strfmt("conv3d_flat: pad %d on axis %d, want %d",
                               pad[i], i, (k[i] - 1) / 2));

  const long long dims[3] = {d, h, wd};
  const long long s = (long long)d * h * wd;
  Tensor<T> y({cout, d, h, wd});
  detail::MapM<T> ym(y.data(), cout, s);
  if (b.defined())
    for (int c = 0; c < cout; ++c) ym.row(c).setConstant(b.data()[c]);
  else
    ym.setZero();

  long long outer = 1, inner = 1;
  if (axis >= 0) {
    for (int i = 0; i < axis; ++i) outer *= dims[i];
    for (int i = axis + 1; i < 3; ++i) inner *= dims[i];
  }
  const int taps = axis >= 0 ? 3 : 1;
  const int kpad = axis >= 0 ? 1 : 0;

  // Gathers the (cout, cin) weight slice for tap t of the extended axis.
  auto tap_weights = [&](int t, std::vector<T>& wt) {
    wt.resize((size_t)cout * cin);
    for (int co = 0; co < cout; ++co)
      for (int ci = 0; ci < cin; ++ci)
        wt[(size_t)co * cin + ci] = w.data()[((long long)co * cin + ci) * taps + t];
  };

  std::vector<T> wt, shifted;
  for (int t = 0; t < taps; ++t) {
    tap_weights(t, wt);
    detail::MapCM<T> wm(wt.data(), cout, cin);
    long long off = t - kpad;
    const T* src = x.data();
    if (off != 0) {
      shifted.resize((size_t)(cin * s));
      detail::shift_axis(x.data(), cin * outer, axis >= 0 ? dims[axis] : 1,
                         inner, off, shifted.data());
      src = shifted.data();
    }
    detail::MapCM<T> xm(src, cin, s);
    ym.noalias() += wm * xm;
  }
  count_flops(2ull * cin * cout * k[0] * k[1] * k[2] * (unsigned long long)s);

  std::vector<Tensor<T>> ins = {x, w};
  if (b.defined()) ins.push_back(b);
  maybe_record<T>(std::move(ins), y, [=]() {
    detail::MapCM<T> gym(y.grad(), cout, s);
    std::vector<T> wt2, buf((size_t)(std::max(cin, cout) * s));
    std::vector<T> gwt((size_t)cout * cin);
    detail::MapM<T> gxm(x.grad(), cin, s);
    for (int t = 0; t < taps; ++t) {
      long long off = t - kpad;
      // dW_t += dY · shift(X, off)^T
      const T* xs = x.data();
      if (off != 0) {
        detail::shift_axis(x.data(), cin * outer, axis >= 0 ? dims[axis] : 1,
                           inner, off, buf.data());
        xs = buf.data();
      }
      {
        detail::MapCM<T> xm(xs, cin, s);
        detail::MapM<T> gwm(gwt.data(), cout, cin);
        gwm.noalias() = gym * xm.transpose();
        for (int co = 0; co < cout; ++co)
          for (int ci = 0; ci < cin; ++ci)
            w.grad()[((long long)co * cin + ci) * taps + t] +=
                gwt[(size_t)co * cin + ci];
      }
      // dX += W_t^T · shift(dY, -off)
      wt2.resize((size_t)cout * cin);
      for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
          wt2[(size_t)co * cin + ci] =
              w.data()[((long long)co * cin + ci) * taps + t];
      detail::MapCM<T> wm(wt2.data(), cout, cin);
      const T* gys = y.grad();
      if (off != 0) {
        detail::shift_axis(y.grad(), cout * outer, axis >= 0 ? dims[axis] : 1,
                           inner, -off, buf.data());
        gys = buf.data();
      }
      detail::MapCM<T> gsm(gys, cout, s);
      gxm.noalias() += wm.transpose() * gsm;
    }
    if (b.defined())
      for (int c = 0; c < cout; ++c) b.grad()[c] += gym.row(c).sum();
  });
  return y;
}

// ---------------------------------------------------------------------------
// pointwise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const long long n = x.numel();
  for (long long i = 0; i < n; ++i)
    y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  count_flops((unsigned long long)n);
  maybe_record<T>({x}, y, [=]() {
    for (long long i = 0; i < n; ++i)
      if (x.data()[i] > T(0)) x.grad()[i] += y.grad()[i];
  });
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const long long n = x.numel();
  // Saturated values are nudged to the nearest representable inside (0,1).
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
  for (long long i = 0; i < n; ++i) {
    T v = x.data()[i];
    T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                    : std::exp(v) / (T(1) + std::exp(v));
    y.data()[i] = std::min(std::max(s, lo), hi);
  }
  count_flops((unsigned long long)n);
  maybe_record<T>({x}, y, [=]() {
    for (long long i = 0; i < n; ++i) {
      T s = y.data()[i];
      x.grad()[i] += y.grad()[i] * s * (T(1) - s);
    }
  });
  return y;
}

enum class Pointwise { kRelu, kSigmoid };

template <typename T>
Tensor<T> pointwise(const Tensor<T>& x, Pointwise kind) {
  return kind == Pointwise::kRelu ? relu(x) : sigmoid(x);
}

// ---------------------------------------------------------------------------
// pooling / upsampling over the trailing two dims (works for (C,H,W) and
// (C,D,H,W) alike)

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  if (x.rank() < 3)
    throw ConfigError(strfmt("maxpool2: rank %d < 3", x.rank()));
  const int h = x.extent(x.rank() - 2), w = x.extent(x.rank() - 1);
  if (h % 2 || w % 2)
    throw ConfigError(strfmt("maxpool2: odd extent %dx%d", h, w));
  std::vector<int> ys = x.shape();
  ys[x.rank() - 2] = h / 2;
  ys[x.rank() - 1] = w / 2;
  Tensor<T> y(ys);
  const long long planes = x.numel() / ((long long)h * w);
  auto argmax = std::make_shared<std::vector<long long>>(y.numel());
  for (long long p = 0; p < planes; ++p) {
    const T* xp = x.data() + p * h * w;
    T* yp = y.data() + p * (h / 2) * (w / 2);
    long long* ap = argmax->data() + p * (h / 2) * (w / 2);
    for (int oy = 0; oy < h / 2; ++oy)
      for (int ox = 0; ox < w / 2; ++ox) {
        long long best = (long long)(2 * oy) * w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            long long idx = (long long)(2 * oy + dy) * w + 2 * ox + dx;
            if (xp[idx] > xp[best]) best = idx;
          }
        yp[(long long)oy * (w / 2) + ox] = xp[best];
        ap[(long long)oy * (w / 2) + ox] = p * h * w + best;
      }
  }
  maybe_record<T>({x}, y, [=]() {
    const long long n = y.numel();
    for (long long i = 0; i < n; ++i) x.grad()[(*argmax)[i]] += y.grad()[i];
  });
  return y;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  if (x.rank() < 3)
    throw ConfigError(strfmt("upsample_nearest2: rank %d < 3", x.rank()));
  const int h = x.extent(x.rank() - 2), w = x.extent(x.rank() - 1);
  std::vector<int> ys = x.shape();
  ys[x.rank() - 2] = 2 * h;
  ys[x.rank() - 1] = 2 * w;
  Tensor<T> y(ys);
  const long long planes = x.numel() / ((long long)h * w);
  for (long long p = 0; p < planes; ++p) {
    const T* xp = x.data() + p * h * w;
    T* yp = y.data() + p * 4ll * h * w;
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix) {
        T v = xp[(long long)iy * w + ix];
        T* q = yp + (long long)(2 * iy) * 2 * w + 2 * ix;
        q[0] = v;
        q[1] = v;
        q[2 * w] = v;
        q[2 * w + 1] = v;
      }
  }
  maybe_record<T>({x}, y, [=]() {
    for (long long p = 0; p < planes; ++p) {
      T* gxp = x.grad() + p * h * w;
      const T* gyp = y.grad() + p * 4ll * h * w;
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix) {
          const T* q = gyp + (long long)(2 * iy) * 2 * w + 2 * ix;
          gxp[(long long)iy * w + ix] += q[0] + q[1] + q[2 * w] + q[2 * w + 1];
        }
    }
  });
  return y;
}

// Doubles one axis by nearest-neighbour repetition (depth decoding).
template <typename T>
Tensor<T> upsample_axis2(const Tensor<T>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw ConfigError(strfmt("upsample_axis2: axis %d of rank %d", axis, x.rank()));
  std::vector<int> ys = x.shape();
  ys[axis] *= 2;
  Tensor<T> y(ys);
  long long outer = 1, inner = 1;
  const long long n = x.extent(axis);
  for (int i = 0; i < axis; ++i) outer *= x.extent(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  for (long long o = 0; o < outer; ++o)
    for (long long i = 0; i < n; ++i) {
      const T* src = x.data() + (o * n + i) * inner;
      T* dst = y.data() + (o * 2 * n + 2 * i) * inner;
      std::memcpy(dst, src, (size_t)inner * sizeof(T));
      std::memcpy(dst + inner, src, (size_t)inner * sizeof(T));
    }
  maybe_record<T>({x}, y, [=]() {
    for (long long o = 0; o < outer; ++o)
      for (long long i = 0; i < n; ++i) {
        T* gx = x.grad() + (o * n + i) * inner;
        const T* gy = y.grad() + (o * 2 * n + 2 * i) * inner;
        for (long long j = 0; j < inner; ++j) gx[j] += gy[j] + gy[inner + j];
      }
  });
  return y;
}

// ---------------------------------------------------------------------------
// add / concat

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw ConfigError(strfmt("add: shape %s vs %s", a.shape_str().c_str(),
                             b.shape_str().c_str()));
  Tensor<T> y(a.shape());
  const long long n = a.numel();
  for (long long i = 0; i < n; ++i) y.data()[i] = a.data()[i] + b.data()[i];
  count_flops((unsigned long long)n);
  maybe_record<T>({a, b}, y, [=]() {
    for (long long i = 0; i < n; ++i) {
      a.grad()[i] += y.grad()[i];
      b.grad()[i] += y.grad()[i];
    }
  });
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: empty part list");
  const Tensor<T>& p0 = parts.front();
  int channels = 0;
  for (const Tensor<T>& p : parts) {
    if (p.rank() != p0.rank())
      throw ConfigError(strfmt("concat_channels: rank %d vs %d", p.rank(), p0.rank()));
    for (int i = 1; i < p.rank(); ++i)
      if (p.extent(i) != p0.extent(i))
        throw ConfigError(strfmt("concat_channels: shape %s vs %s",
                                 p.shape_str().c_str(), p0.shape_str().c_str()));
    channels += p.extent(0);
  }
  std::vector<int> ys = p0.shape();
  ys[0] = channels;
  Tensor<T> y(ys);
  long long off = 0;
  for (const Tensor<T>& p : parts) {
    std::memcpy(y.data() + off, p.data(), (size_t)p.numel() * sizeof(T));
    off += p.numel();
  }
  maybe_record<T>(parts, y, [=]() {
    long long o = 0;
    for (const Tensor<T>& p : parts) {
      const long long n = p.numel();
      for (long long i = 0; i < n; ++i) p.grad()[i] += y.grad()[o + i];
      o += n;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// batchnorm: channel dim 0, statistics over all remaining dims

enum class BnMode { kTrain, kEval };

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, const Tensor<T>& running_mean,
                    const Tensor<T>& running_var, BnMode mode, T momentum = T(0.1),
                    T eps = T(1e-5), std::vector<T>* mean_out = nullptr,
                    std::vector<T>* var_out = nullptr,
                    bool update_running = true) {
  if (x.rank() < 1) throw ConfigError("batchnorm: scalar input");
  const int c = x.extent(0);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw ConfigError(strfmt("batchnorm: %d channels but gamma %lld, beta %lld",
                             c, gamma.numel(), beta.numel()));
  const long long m = x.numel() / c;
  Tensor<T> y(x.shape());

  auto mean = std::make_shared<std::vector<T>>(c);
  auto invstd = std::make_shared<std::vector<T>>(c);
  if (mode == BnMode::kTrain) {
    std::vector<T> var(c);
    for (int ch = 0; ch < c; ++ch) {
      const T* xp = x.data() + (long long)ch * m;
      T mu = 0;
      for (long long i = 0; i < m; ++i) mu += xp[i];
      mu /= (T)m;
      T v = 0;
      for (long long i = 0; i < m; ++i) v += (xp[i] - mu) * (xp[i] - mu);
      v = std::max(v / (T)m, T(0));
      (*mean)[ch] = mu;
      var[ch] = v;
      (*invstd)[ch] = T(1) / std::sqrt(v + eps);
    }
    if (update_running)
      for (int ch = 0; ch < c; ++ch) {
        running_mean.data()[ch] =
            (T(1) - momentum) * running_mean.data()[ch] + momentum * (*mean)[ch];
        running_var.data()[ch] =
            (T(1) - momentum) * running_var.data()[ch] + momentum * var[ch];
      }
    if (mean_out) *mean_out = *mean;
    if (var_out) *var_out = var;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      (*mean)[ch] = running_mean.data()[ch];
      (*invstd)[ch] = T(1) / std::sqrt(running_var.data()[ch] + eps);
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    const T* xp = x.data() + (long long)ch * m;
    T* yp = y.data() + (long long)ch * m;
    const T mu = (*mean)[ch], inv = (*invstd)[ch];
    const T g = gamma.data()[ch], bb = beta.data()[ch];
    for (long long i = 0; i < m; ++i) yp[i] = g * (xp[i] - mu) * inv + bb;
  }
  count_flops(2ull * (unsigned long long)x.numel());

  const bool train = mode == BnMode::kTrain;
  maybe_record<T>({x, gamma, beta}, y, [=]() {
    for (int ch = 0; ch < c; ++ch) {
      const T* xp = x.data() + (long long)ch * m;
      const T* gyp = y.grad() + (long long)ch * m;
      T* gxp = x.grad() + (long long)ch * m;
      const T mu = (*mean)[ch], inv = (*invstd)[ch];
      const T g = gamma.data()[ch];
      T sum_gy = 0, sum_gy_xhat = 0;
      for (long long i = 0; i < m; ++i) {
        sum_gy += gyp[i];
        sum_gy_xhat += gyp[i] * (xp[i] - mu) * inv;
      }
      beta.grad()[ch] += sum_gy;
      gamma.grad()[ch] += sum_gy_xhat;
      if (train) {
        const T k1 = sum_gy / (T)m, k2 = sum_gy_xhat / (T)m;
        for (long long i = 0; i < m; ++i) {
          T xhat = (xp[i] - mu) * inv;
          gxp[i] += g * inv * (gyp[i] - k1 - xhat * k2);
        }
      } else {
        for (long long i = 0; i < m; ++i) gxp[i] += g * inv * gyp[i];
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// reductions / reshaping / loss

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Tensor<T> y({1});
  T acc = 0;
  const long long n = x.numel();
  for (long long i = 0; i < n; ++i) acc += x.data()[i];
  y.data()[0] = acc;
  count_flops((unsigned long long)n);
  maybe_record<T>({x}, y, [=]() {
    const T g = y.grad()[0];
    for (long long i = 0; i < n; ++i) x.grad()[i] += g;
  });
  return y;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const std::vector<int>& shape) {
  Tensor<T> y(shape);
  if (y.numel() != x.numel())
    throw ConfigError(strfmt("reshape: %lld values into %s", x.numel(),
                             y.shape_str().c_str()));
  std::memcpy(y.data(), x.data(), (size_t)x.numel() * sizeof(T));
  maybe_record<T>({x}, y, [=]() {
    const long long n = x.numel();
    for (long long i = 0; i < n; ++i) x.grad()[i] += y.grad()[i];
  });
  return y;
}

// Negated voxel-wise log-likelihood (binary cross-entropy), predictions
// clamped to [1e-7, 1-1e-7]; mean over voxels unless normalize is false.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const std::vector<T>& target,
                   bool normalize = true) {
  if ((long long)target.size() != pred.numel())
    throw UsageError(strfmt("bce_loss: %lld predictions vs %zu targets",
                            pred.numel(), target.size()));
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  const long long n = pred.numel();
  const T scale = normalize ? T(1) / (T)n : T(1);
  Tensor<T> y({1});
  T acc = 0;
  for (long long i = 0; i < n; ++i) {
    T p = std::min(std::max(pred.data()[i], lo), hi);
    T t = target[i];
    acc -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
  }
  y.data()[0] = acc * scale;
  count_flops(3ull * (unsigned long long)n);
  auto tgt = std::make_shared<std::vector<T>>(target);
  maybe_record<T>({pred}, y, [=]() {
    const T g = y.grad()[0] * scale;
    for (long long i = 0; i < n; ++i) {
      T p = pred.data()[i];
      if (p <= lo || p >= hi) continue;
      T t = (*tgt)[i];
      pred.grad()[i] += g * (-(t / p) + (T(1) - t) / (T(1) - p));
    }
  });
  return y;
}

}  // namespace vrn
