// Serial reference kernels: direct transcriptions of the defining sums.

#include <limits>

#include "ftcn/tensor/kernels.hpp"

namespace ftcn::reference {

namespace {

struct Index5 {
  const WindowGeometry& g;
  std::int64_t in(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t h,
                  std::int64_t w) const {
    return (((n * g.in_channels + c) * g.t + t) * g.h + h) * g.w + w;
  }
  std::int64_t out(std::int64_t n, std::int64_t c, std::int64_t t, std::int64_t h,
                   std::int64_t w, std::int64_t channels) const {
    return (((n * channels + c) * g.to + t) * g.ho + h) * g.wo + w;
  }
  std::int64_t weight(std::int64_t co, std::int64_t ci, int kt, int kh, int kw) const {
    return (((co * g.in_channels + ci) * g.kernel.t + kt) * g.kernel.h + kh) * g.kernel.w + kw;
  }
  bool inside(std::int64_t t, std::int64_t h, std::int64_t w) const {
    return t >= 0 && t < g.t && h >= 0 && h < g.h && w >= 0 && w < g.w;
  }
};

}  // namespace

template <typename T>
void conv3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const Index5 ix{g};
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t ot = 0; ot < g.to; ++ot)
        for (std::int64_t oh = 0; oh < g.ho; ++oh)
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            T acc = bias.empty() ? T{0} : bias[co];
            for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
              for (int kt = 0; kt < g.kernel.t; ++kt)
                for (int kh = 0; kh < g.kernel.h; ++kh)
                  for (int kw = 0; kw < g.kernel.w; ++kw) {
                    const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
                    const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                    const std::int64_t iw = ow * g.stride.w - g.pad.w + kw;
                    if (!ix.inside(it, ih, iw)) continue;
                    acc += w[ix.weight(co, ci, kt, kh, kw)] * x[ix.in(n, ci, it, ih, iw)];
                  }
            y[ix.out(n, co, ot, oh, ow, g.out_channels)] = acc;
          }
}

template <typename T>
void conv3d_backward_input(const WindowGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx) {
  const Index5 ix{g};
  for (auto& v : gx) v = T{0};
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t ot = 0; ot < g.to; ++ot)
        for (std::int64_t oh = 0; oh < g.ho; ++oh)
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const T gv = gy[ix.out(n, co, ot, oh, ow, g.out_channels)];
            for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
              for (int kt = 0; kt < g.kernel.t; ++kt)
                for (int kh = 0; kh < g.kernel.h; ++kh)
                  for (int kw = 0; kw < g.kernel.w; ++kw) {
                    const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
                    const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                    const std::int64_t iw = ow * g.stride.w - g.pad.w + kw;
                    if (!ix.inside(it, ih, iw)) continue;
                    gx[ix.in(n, ci, it, ih, iw)] += w[ix.weight(co, ci, kt, kh, kw)] * gv;
                  }
          }
}

template <typename T>
void conv3d_backward_weight(const WindowGeometry& g, std::span<const T> x,
                            std::span<const T> gy, std::span<T> gw) {
  const Index5 ix{g};
  for (auto& v : gw) v = T{0};
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t co = 0; co < g.out_channels; ++co)
      for (std::int64_t ot = 0; ot < g.to; ++ot)
        for (std::int64_t oh = 0; oh < g.ho; ++oh)
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const T gv = gy[ix.out(n, co, ot, oh, ow, g.out_channels)];
            for (std::int64_t ci = 0; ci < g.in_channels; ++ci)
              for (int kt = 0; kt < g.kernel.t; ++kt)
                for (int kh = 0; kh < g.kernel.h; ++kh)
                  for (int kw = 0; kw < g.kernel.w; ++kw) {
                    const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
                    const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                    const std::int64_t iw = ow * g.stride.w - g.pad.w + kw;
                    if (!ix.inside(it, ih, iw)) continue;
                    gw[ix.weight(co, ci, kt, kh, kw)] += gv * x[ix.in(n, ci, it, ih, iw)];
                  }
          }
}

template <typename T>
void maxpool3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<std::int64_t> argmax) {
  const Index5 ix{g};
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t c = 0; c < g.in_channels; ++c)
      for (std::int64_t ot = 0; ot < g.to; ++ot)
        for (std::int64_t oh = 0; oh < g.ho; ++oh)
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            T best = -std::numeric_limits<T>::infinity();
            std::int64_t where = -1;
            for (int kt = 0; kt < g.kernel.t; ++kt)
              for (int kh = 0; kh < g.kernel.h; ++kh)
                for (int kw = 0; kw < g.kernel.w; ++kw) {
                  const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
                  const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                  const std::int64_t iw = ow * g.stride.w - g.pad.w + kw;
                  if (!ix.inside(it, ih, iw)) continue;
                  const std::int64_t off = ix.in(n, c, it, ih, iw);
                  if (where < 0 || x[off] > best) {
                    best = x[off];
                    where = off;
                  }
                }
            const std::int64_t o = ix.out(n, c, ot, oh, ow, g.in_channels);
            y[o] = best;
            argmax[o] = where;
          }
}

template <typename T>
void linear_forward(const MatmulDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  for (std::int64_t r = 0; r < d.rows; ++r)
    for (std::int64_t o = 0; o < d.out; ++o) {
      T acc = bias.empty() ? T{0} : bias[o];
      for (std::int64_t k = 0; k < d.in; ++k) acc += x[r * d.in + k] * w[o * d.in + k];
      y[r * d.out + o] = acc;
    }
}

#define FTCN_INSTANTIATE_REFERENCE(T)                                                        \
  template void conv3d_forward<T>(const WindowGeometry&, std::span<const T>,                \
                                  std::span<const T>, std::span<const T>, std::span<T>);    \
  template void conv3d_backward_input<T>(const WindowGeometry&, std::span<const T>,         \
                                         std::span<const T>, std::span<T>);                 \
  template void conv3d_backward_weight<T>(const WindowGeometry&, std::span<const T>,        \
                                          std::span<const T>, std::span<T>);                \
  template void maxpool3d_forward<T>(const WindowGeometry&, std::span<const T>,             \
                                     std::span<T>, std::span<std::int64_t>);                \
  template void linear_forward<T>(const MatmulDims&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);

FTCN_INSTANTIATE_REFERENCE(float)
FTCN_INSTANTIATE_REFERENCE(double)
#undef FTCN_INSTANTIATE_REFERENCE

}  // namespace ftcn::reference
