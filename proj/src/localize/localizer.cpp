#include "ftcn/localize/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "ftcn/eval/metrics.hpp"
#include "ftcn/tensor/stn_io.hpp"

namespace ftcn::localize {

namespace {

void check_geometry(std::int64_t height, std::int64_t width, std::int64_t window, std::int64_t stride) {
  if (window < 1 || stride < 1) throw Error("window and stride must be positive");
  if (window > height || window > width) {
    throw Error("window " + std::to_string(window) + " is larger than the " + std::to_string(height) + "x" +
                std::to_string(width) + " frame");
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

}  // namespace

std::int64_t default_window(std::int64_t height) { return std::max<std::int64_t>(1, height / 2); }

std::int64_t default_stride(std::int64_t height) { return std::max<std::int64_t>(1, height / 8); }

std::array<std::int64_t, 2> grid_shape(std::int64_t height, std::int64_t width, std::int64_t window,
                                       std::int64_t stride) {
  check_geometry(height, width, window, stride);
  return {(height - window) / stride + 1, (width - window) / stride + 1};
}

Tensor mask_outside(const Tensor& clip, std::int64_t top, std::int64_t left, std::int64_t window) {
  if (clip.rank() != 4) throw ShapeError("expected a clip [C, T, H, W], got " + to_string(clip.shape()));
  const std::int64_t planes = clip.dim(0) * clip.dim(1), h = clip.dim(2), w = clip.dim(3);
  Tensor out(clip.shape(), 0.0f);
  const std::int64_t y1 = std::min(h, top + window), x1 = std::min(w, left + window);
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t y = std::max<std::int64_t>(0, top); y < y1; ++y) {
      for (std::int64_t x = std::max<std::int64_t>(0, left); x < x1; ++x) {
        out[(p * h + y) * w + x] = clip[(p * h + y) * w + x];
      }
    }
  }
  return out;
}

HeatMap localize(model::Model& model, const Tensor& clip, std::int64_t window, std::int64_t stride,
                 std::string clip_id) {
  if (clip.rank() != 4) throw ShapeError("expected a clip [C, T, H, W], got " + to_string(clip.shape()));
  HeatMap map;
  map.window = window;
  map.stride = stride;
  map.height = clip.dim(2);
  map.width = clip.dim(3);
  map.clip_id = std::move(clip_id);
  const auto [rows, cols] = grid_shape(map.height, map.width, window, stride);
  map.grid = Tensor({rows, cols});
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t cell = 0; cell < rows * cols; ++cell) {
    try {
      const Tensor masked = mask_outside(clip, (cell / cols) * stride, (cell % cols) * stride, window);
      map.grid[cell] = static_cast<float>(eval::video_score(model, masked));
    } catch (...) {
#pragma omp critical(ftcn_localize_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return map;
}

std::array<std::int64_t, 2> argmax(const HeatMap& map) {
  const auto values = map.grid.data();
  const auto best = std::max_element(values.begin(), values.end()) - values.begin();
  return {best / map.cols(), best % map.cols()};
}

std::array<double, 2> cell_center(const HeatMap& map, std::int64_t row, std::int64_t col) {
  const double half = 0.5 * static_cast<double>(map.window - 1);
  return {static_cast<double>(row * map.stride) + half, static_cast<double>(col * map.stride) + half};
}

std::array<std::uint8_t, 3> ramp(double p) { return {to_byte(p), 0, to_byte(1.0 - p)}; }

std::string render_ppm(const HeatMap& map, std::int64_t height, std::int64_t width,
                       const std::optional<Tensor>& base) {
  if (height < 1 || width < 1) throw Error("image size must be positive");
  if (base && base->shape() != Shape{3, height, width}) {
    throw ShapeError("base frame must be [3, " + std::to_string(height) + ", " + std::to_string(width) + "], got " +
                     to_string(base->shape()));
  }
  const std::int64_t rows = map.rows(), cols = map.cols();
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + static_cast<std::size_t>(3 * height * width));
  for (std::int64_t y = 0; y < height; ++y) {
    const double gy = height > 1 ? static_cast<double>(y * (rows - 1)) / static_cast<double>(height - 1) : 0.0;
    const auto y0 = static_cast<std::int64_t>(std::floor(gy));
    const std::int64_t y1 = std::min(y0 + 1, rows - 1);
    const double fy = gy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < width; ++x) {
      const double gx = width > 1 ? static_cast<double>(x * (cols - 1)) / static_cast<double>(width - 1) : 0.0;
      const auto x0 = static_cast<std::int64_t>(std::floor(gx));
      const std::int64_t x1 = std::min(x0 + 1, cols - 1);
      const double fx = gx - static_cast<double>(x0);
      const double top = map.grid[y0 * cols + x0] + fx * (map.grid[y0 * cols + x1] - map.grid[y0 * cols + x0]);
      const double bottom = map.grid[y1 * cols + x0] + fx * (map.grid[y1 * cols + x1] - map.grid[y1 * cols + x0]);
      const double p = std::clamp(top + fy * (bottom - top), 0.0, 1.0);
      const std::array<double, 3> color{p, 0.0, 1.0 - p};
      for (std::int64_t c = 0; c < 3; ++c) {
        double v = color[static_cast<std::size_t>(c)];
        if (base) v = 0.5 * v + 0.5 * static_cast<double>((*base)[(c * height + y) * width + x]);
        out[header + static_cast<std::size_t>(3 * (y * width + x) + c)] = static_cast<char>(to_byte(v));
      }
    }
  }
  return out;
}

void render_heatmap(const HeatMap& map, const std::filesystem::path& out, const std::optional<Tensor>& base) {
  write_file(out, render_ppm(map, map.height, map.width, base));
}

}  // namespace ftcn::localize
