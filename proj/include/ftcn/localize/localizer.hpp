#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ftcn/model/model.hpp"

namespace ftcn::localize {

struct HeatMap {
  /// [rows, cols] probabilities; cell (i, j) is the window at (i * stride, j * stride).
  Tensor grid;
  std::int64_t window = 0, stride = 0;
  /// Frame size of the source clip.
  std::int64_t height = 0, width = 0;
  std::string clip_id;

  std::int64_t rows() const { return grid.dim(0); }
  std::int64_t cols() const { return grid.dim(1); }
};

std::int64_t default_window(std::int64_t height);
std::int64_t default_stride(std::int64_t height);

/// floor((extent - window) / stride) + 1 per axis.
std::array<std::int64_t, 2> grid_shape(std::int64_t height, std::int64_t width, std::int64_t window,
                                       std::int64_t stride);

/// Copy of `clip` [3, T, H, W] with every pixel outside the square window at
/// (top, left) set to zero in all frames and channels.
Tensor mask_outside(const Tensor& clip, std::int64_t top, std::int64_t left, std::int64_t window);

/// Scores each masked copy of `clip` with the model. Clips longer than the
/// model's clip size are scored as videos (mean over windows).
HeatMap localize(model::Model& model, const Tensor& clip, std::int64_t window, std::int64_t stride,
                 std::string clip_id = {});

/// (row, col) of the highest cell; the first one on ties.
std::array<std::int64_t, 2> argmax(const HeatMap& map);

/// Pixel centre (y, x) of a cell's window.
std::array<double, 2> cell_center(const HeatMap& map, std::int64_t row, std::int64_t col);

/// Linear ramp from blue (0, 0, 255) at 0 to red (255, 0, 0) at 1.
std::array<std::uint8_t, 3> ramp(double p);

/// Binary PPM bytes of the map upsampled (align-corners bilinear) to
/// height x width, optionally blended 50/50 over `base` [3, H, W] in [0, 1].
std::string render_ppm(const HeatMap& map, std::int64_t height, std::int64_t width,
                       const std::optional<Tensor>& base = std::nullopt);

/// Writes render_ppm at the map's frame size.
void render_heatmap(const HeatMap& map, const std::filesystem::path& out,
                    const std::optional<Tensor>& base = std::nullopt);

}  // namespace ftcn::localize
