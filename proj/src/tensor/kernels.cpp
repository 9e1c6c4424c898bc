#include "ftcn/tensor/kernels.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ftcn {

WindowGeometry make_geometry(std::int64_t batch, std::int64_t in_channels,
                             std::int64_t out_channels, std::int64_t t, std::int64_t h,
                             std::int64_t w, Dims3 kernel, Dims3 stride, Dims3 pad) {
  if (kernel.t < 1 || kernel.h < 1 || kernel.w < 1) {
    throw ShapeError("window kernel entries must be >= 1, got " + to_string(kernel));
  }
  if (stride.t < 1 || stride.h < 1 || stride.w < 1) {
    throw ShapeError("window stride entries must be >= 1, got " + to_string(stride));
  }
  if (pad.t < 0 || pad.h < 0 || pad.w < 0) {
    throw ShapeError("window padding must be >= 0, got " + to_string(pad));
  }
  WindowGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.t = t;
  g.h = h;
  g.w = w;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = pad;
  g.to = window_out_extent(t, kernel.t, stride.t, pad.t);
  g.ho = window_out_extent(h, kernel.h, stride.h, pad.h);
  g.wo = window_out_extent(w, kernel.w, stride.w, pad.w);
  if (g.to < 1 || g.ho < 1 || g.wo < 1) {
    throw ShapeError("window " + to_string(kernel) + " stride " + to_string(stride) +
                     " pad " + to_string(pad) + " over extent " + std::to_string(t) + "x" +
                     std::to_string(h) + "x" + std::to_string(w) + " yields an empty output");
  }
  return g;
}

namespace {

// Range of output positions o with 0 <= o*stride - pad + k < extent.
struct Range {
  std::int64_t lo, hi;  // inclusive lo, exclusive hi
};

inline Range valid_outputs(std::int64_t extent, std::int64_t out_extent, int k, int stride,
                           int pad) {
  // o*stride >= pad - k  and  o*stride <= extent - 1 + pad - k
  const std::int64_t a = pad - k;
  const std::int64_t b = extent - 1 + pad - k;
  std::int64_t lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  std::int64_t hi = b < 0 ? 0 : b / stride + 1;
  lo = std::min(lo, out_extent);
  hi = std::clamp(hi, lo, out_extent);
  return {lo, hi};
}

}  // namespace

namespace kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

template <typename T>
void conv3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::int64_t in_plane = g.in_plane();
  const std::int64_t out_plane = g.out_plane();
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t jobs = g.batch * g.out_channels;

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::int64_t n = job / g.out_channels;
    const std::int64_t co = job % g.out_channels;
    T* yp = y.data() + job * out_plane;
    std::fill(yp, yp + out_plane, bias.empty() ? T{0} : bias[co]);
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
      const T* xp = x.data() + (n * g.in_channels + ci) * in_plane;
      const T* wp = w.data() + (co * g.in_channels + ci) * kvol;
      for (int kt = 0; kt < g.kernel.t; ++kt) {
        const Range rt = valid_outputs(g.t, g.to, kt, g.stride.t, g.pad.t);
        for (int kh = 0; kh < g.kernel.h; ++kh) {
          const Range rh = valid_outputs(g.h, g.ho, kh, g.stride.h, g.pad.h);
          for (int kw = 0; kw < g.kernel.w; ++kw) {
            const Range rw = valid_outputs(g.w, g.wo, kw, g.stride.w, g.pad.w);
            const T wv = wp[(kt * g.kernel.h + kh) * g.kernel.w + kw];
            for (std::int64_t ot = rt.lo; ot < rt.hi; ++ot) {
              const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
              for (std::int64_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                T* yrow = yp + (ot * g.ho + oh) * g.wo;
                const T* xrow = xp + (it * g.h + ih) * g.w - g.pad.w + kw;
                if (g.stride.w == 1) {
                  for (std::int64_t ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += wv * xrow[ow];
                } else {
                  for (std::int64_t ow = rw.lo; ow < rw.hi; ++ow) {
                    yrow[ow] += wv * xrow[ow * g.stride.w];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_input(const WindowGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx) {
  const std::int64_t in_plane = g.in_plane();
  const std::int64_t out_plane = g.out_plane();
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t jobs = g.batch * g.in_channels;

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::int64_t n = job / g.in_channels;
    const std::int64_t ci = job % g.in_channels;
    T* gxp = gx.data() + job * in_plane;
    std::fill(gxp, gxp + in_plane, T{0});
    for (std::int64_t co = 0; co < g.out_channels; ++co) {
      const T* gyp = gy.data() + (n * g.out_channels + co) * out_plane;
      const T* wp = w.data() + (co * g.in_channels + ci) * kvol;
      for (int kt = 0; kt < g.kernel.t; ++kt) {
        const Range rt = valid_outputs(g.t, g.to, kt, g.stride.t, g.pad.t);
        for (int kh = 0; kh < g.kernel.h; ++kh) {
          const Range rh = valid_outputs(g.h, g.ho, kh, g.stride.h, g.pad.h);
          for (int kw = 0; kw < g.kernel.w; ++kw) {
            const Range rw = valid_outputs(g.w, g.wo, kw, g.stride.w, g.pad.w);
            const T wv = wp[(kt * g.kernel.h + kh) * g.kernel.w + kw];
            for (std::int64_t ot = rt.lo; ot < rt.hi; ++ot) {
              const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
              for (std::int64_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                const T* gyrow = gyp + (ot * g.ho + oh) * g.wo;
                T* gxrow = gxp + (it * g.h + ih) * g.w - g.pad.w + kw;
                if (g.stride.w == 1) {
                  for (std::int64_t ow = rw.lo; ow < rw.hi; ++ow) gxrow[ow] += wv * gyrow[ow];
                } else {
                  for (std::int64_t ow = rw.lo; ow < rw.hi; ++ow) {
                    gxrow[ow * g.stride.w] += wv * gyrow[ow];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_weight(const WindowGeometry& g, std::span<const T> x,
                            std::span<const T> gy, std::span<T> gw) {
  const std::int64_t in_plane = g.in_plane();
  const std::int64_t out_plane = g.out_plane();
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t jobs = g.out_channels * g.in_channels;

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::int64_t co = job / g.in_channels;
    const std::int64_t ci = job % g.in_channels;
    T* gwp = gw.data() + job * kvol;
    for (int kt = 0; kt < g.kernel.t; ++kt) {
      const Range rt = valid_outputs(g.t, g.to, kt, g.stride.t, g.pad.t);
      for (int kh = 0; kh < g.kernel.h; ++kh) {
        const Range rh = valid_outputs(g.h, g.ho, kh, g.stride.h, g.pad.h);
        for (int kw = 0; kw < g.kernel.w; ++kw) {
          const Range rw = valid_outputs(g.w, g.wo, kw, g.stride.w, g.pad.w);
          T acc{0};
          for (std::int64_t n = 0; n < g.batch; ++n) {
            const T* xp = x.data() + (n * g.in_channels + ci) * in_plane;
            const T* gyp = gy.data() + (n * g.out_channels + co) * out_plane;
            for (std::int64_t ot = rt.lo; ot < rt.hi; ++ot) {
              const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
              for (std::int64_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
                const T* gyrow = gyp + (ot * g.ho + oh) * g.wo;
                const T* xrow = xp + (it * g.h + ih) * g.w - g.pad.w + kw;
                for (std::int64_t ow = rw.lo; ow < rw.hi; ++ow) {
                  acc += gyrow[ow] * xrow[ow * g.stride.w];
                }
              }
            }
          }
          gwp[(kt * g.kernel.h + kh) * g.kernel.w + kw] = acc;
        }
      }
    }
  }
}

template <typename T>
void maxpool3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<std::int64_t> argmax) {
  const std::int64_t in_plane = g.in_plane();
  const std::int64_t out_plane = g.out_plane();
  const std::int64_t jobs = g.batch * g.in_channels;

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const T* xp = x.data() + job * in_plane;
    T* yp = y.data() + job * out_plane;
    std::int64_t* ap = argmax.data() + job * out_plane;
    for (std::int64_t ot = 0; ot < g.to; ++ot) {
      for (std::int64_t oh = 0; oh < g.ho; ++oh) {
        for (std::int64_t ow = 0; ow < g.wo; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t where = -1;
          for (int kt = 0; kt < g.kernel.t; ++kt) {
            const std::int64_t it = ot * g.stride.t - g.pad.t + kt;
            if (it < 0 || it >= g.t) continue;
            for (int kh = 0; kh < g.kernel.h; ++kh) {
              const std::int64_t ih = oh * g.stride.h - g.pad.h + kh;
              if (ih < 0 || ih >= g.h) continue;
              for (int kw = 0; kw < g.kernel.w; ++kw) {
                const std::int64_t iw = ow * g.stride.w - g.pad.w + kw;
                if (iw < 0 || iw >= g.w) continue;
                const std::int64_t off = (it * g.h + ih) * g.w + iw;
                if (where < 0 || xp[off] > best) {
                  best = xp[off];
                  where = off;
                }
              }
            }
          }
          const std::int64_t o = (ot * g.ho + oh) * g.wo + ow;
          yp[o] = best;
          ap[o] = job * in_plane + where;
        }
      }
    }
  }
}

template <typename T>
void maxpool3d_backward(const WindowGeometry& g, std::span<const std::int64_t> argmax,
                        std::span<const T> gy, std::span<T> gx) {
  const std::int64_t in_plane = g.in_plane();
  const std::int64_t out_plane = g.out_plane();
  const std::int64_t jobs = g.batch * g.in_channels;

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    T* gxp = gx.data() + job * in_plane;
    std::fill(gxp, gxp + in_plane, T{0});
    const std::int64_t* ap = argmax.data() + job * out_plane;
    const T* gyp = gy.data() + job * out_plane;
    for (std::int64_t o = 0; o < out_plane; ++o) gx[ap[o]] += gyp[o];
  }
}

template <typename T>
void linear_forward(const MatmulDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  // Transposed weights keep the inner loop contiguous; per-element order is
  // still bias first, then k ascending.
  std::vector<T> wt(static_cast<std::size_t>(d.in * d.out));
  for (std::int64_t o = 0; o < d.out; ++o) {
    for (std::int64_t k = 0; k < d.in; ++k) wt[k * d.out + o] = w[o * d.in + k];
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < d.rows; ++r) {
    T* yr = y.data() + r * d.out;
    const T* xr = x.data() + r * d.in;
    for (std::int64_t o = 0; o < d.out; ++o) yr[o] = bias.empty() ? T{0} : bias[o];
    for (std::int64_t k = 0; k < d.in; ++k) {
      const T xv = xr[k];
      const T* wk = wt.data() + k * d.out;
      for (std::int64_t o = 0; o < d.out; ++o) yr[o] += xv * wk[o];
    }
  }
}

template <typename T>
void linear_backward_input(const MatmulDims& d, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx) {
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < d.rows; ++r) {
    T* gxr = gx.data() + r * d.in;
    const T* gyr = gy.data() + r * d.out;
    std::fill(gxr, gxr + d.in, T{0});
    for (std::int64_t o = 0; o < d.out; ++o) {
      const T g = gyr[o];
      const T* wo = w.data() + o * d.in;
      for (std::int64_t k = 0; k < d.in; ++k) gxr[k] += g * wo[k];
    }
  }
}

template <typename T>
void linear_backward_weight(const MatmulDims& d, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw) {
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < d.out; ++o) {
    T* gwo = gw.data() + o * d.in;
    std::fill(gwo, gwo + d.in, T{0});
    for (std::int64_t r = 0; r < d.rows; ++r) {
      const T g = gy[r * d.out + o];
      const T* xr = x.data() + r * d.in;
      for (std::int64_t k = 0; k < d.in; ++k) gwo[k] += g * xr[k];
    }
  }
}

#define FTCN_INSTANTIATE_KERNELS(T)                                                          \
  template void conv3d_forward<T>(const WindowGeometry&, std::span<const T>,                \
                                  std::span<const T>, std::span<const T>, std::span<T>);    \
  template void conv3d_backward_input<T>(const WindowGeometry&, std::span<const T>,         \
                                         std::span<const T>, std::span<T>);                 \
  template void conv3d_backward_weight<T>(const WindowGeometry&, std::span<const T>,        \
                                          std::span<const T>, std::span<T>);                \
  template void maxpool3d_forward<T>(const WindowGeometry&, std::span<const T>,             \
                                     std::span<T>, std::span<std::int64_t>);                \
  template void maxpool3d_backward<T>(const WindowGeometry&, std::span<const std::int64_t>, \
                                      std::span<const T>, std::span<T>);                    \
  template void linear_forward<T>(const MatmulDims&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);                        \
  template void linear_backward_input<T>(const MatmulDims&, std::span<const T>,             \
                                         std::span<const T>, std::span<T>);                 \
  template void linear_backward_weight<T>(const MatmulDims&, std::span<const T>,            \
                                          std::span<const T>, std::span<T>);

FTCN_INSTANTIATE_KERNELS(float)
FTCN_INSTANTIATE_KERNELS(double)
#undef FTCN_INSTANTIATE_KERNELS

}  // namespace kernels
}  // namespace ftcn
