#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Two implementations share one signature set:
//   ftcn::kernels    OpenMP-parallel. Every output element is produced by a
//                    single thread with a fixed reduction order, so results are
//                    bitwise identical for any thread count.
//   ftcn::reference  Serial textbook loops, kept for testing and benchmarking.

#include <cstdint>
#include <span>

#include "ftcn/tensor/tensor.hpp"

namespace ftcn {

/// Output extent for a sliding window in floor mode; may be < 1 (caller rejects).
inline std::int64_t window_out_extent(std::int64_t in, int kernel, int stride, int pad) {
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

/// Resolved geometry of a batched 3D window op over N x C x T x H x W data.
struct WindowGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t t = 1, h = 1, w = 1;
  Dims3 kernel, stride, pad{0, 0, 0};
  std::int64_t to = 1, ho = 1, wo = 1;

  std::int64_t in_plane() const { return t * h * w; }
  std::int64_t out_plane() const { return to * ho * wo; }
  std::int64_t kernel_volume() const {
    return static_cast<std::int64_t>(kernel.t) * kernel.h * kernel.w;
  }
};

/// Validates extents and fills the output dims; throws ShapeError on empty output.
WindowGeometry make_geometry(std::int64_t batch, std::int64_t in_channels,
                             std::int64_t out_channels, std::int64_t t, std::int64_t h,
                             std::int64_t w, Dims3 kernel, Dims3 stride, Dims3 pad);

struct MatmulDims {
  std::int64_t rows = 1;   // leading positions
  std::int64_t in = 1;     // Din
  std::int64_t out = 1;    // Dout
};

namespace kernels {

int max_threads();
void set_threads(int n);

template <typename T>
void conv3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
template <typename T>
void conv3d_backward_input(const WindowGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx);
template <typename T>
void conv3d_backward_weight(const WindowGeometry& g, std::span<const T> x,
                            std::span<const T> gy, std::span<T> gw);

/// Padded cells hold -inf; `argmax` receives the flat input offset of each winner
/// (first occurrence in scan order on ties).
template <typename T>
void maxpool3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<std::int64_t> argmax);
template <typename T>
void maxpool3d_backward(const WindowGeometry& g, std::span<const std::int64_t> argmax,
                        std::span<const T> gy, std::span<T> gx);

/// y[r, o] = sum_k x[r, k] * w[o, k] + b[o]
template <typename T>
void linear_forward(const MatmulDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
template <typename T>
void linear_backward_input(const MatmulDims& d, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx);
template <typename T>
void linear_backward_weight(const MatmulDims& d, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw);

}  // namespace kernels

namespace reference {

template <typename T>
void conv3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
template <typename T>
void conv3d_backward_input(const WindowGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx);
template <typename T>
void conv3d_backward_weight(const WindowGeometry& g, std::span<const T> x,
                            std::span<const T> gy, std::span<T> gw);
template <typename T>
void maxpool3d_forward(const WindowGeometry& g, std::span<const T> x, std::span<T> y,
                       std::span<std::int64_t> argmax);
template <typename T>
void linear_forward(const MatmulDims& d, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

}  // namespace reference

}  // namespace ftcn
