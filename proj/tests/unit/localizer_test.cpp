#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ftcn/arch/spec.hpp"
#include "ftcn/localize/localizer.hpp"
#include "ftcn/tensor/stn_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace ftcn;
using namespace ftcn::localize;

namespace {

arch::ArchSpec tiny_spec(std::int64_t size = 16) {
  const std::string s = std::to_string(size);
  return arch::parse_arch("input c=3 t=4 h=" + s + " w=" + s +
                          "\n"
                          "conv3d name=conv1 out=4 k=3x1x1 s=1x1x1\n"
                          "savgpool name=savgpool\n"
                          "head kind=linear\n");
}

model::Model constant_model(float logit, std::int64_t size = 16) {
  model::Model m(tiny_spec(size), 1);
  for (auto& [name, p] : m.params()) p.fill(0.0f);
  m.params().at("head.bias").fill(logit);
  return m;
}

HeatMap map_of(std::int64_t rows, std::int64_t cols, std::vector<float> values) {
  HeatMap m;
  m.grid = Tensor({rows, cols});
  for (std::size_t i = 0; i < values.size(); ++i) m.grid[static_cast<std::int64_t>(i)] = values[i];
  m.height = rows;
  m.width = cols;
  m.window = 1;
  m.stride = 1;
  return m;
}

std::array<unsigned char, 3> pixel(const std::string& ppm, std::size_t header, std::int64_t width, std::int64_t y,
                                   std::int64_t x) {
  const std::size_t at = header + static_cast<std::size_t>(3 * (y * width + x));
  return {static_cast<unsigned char>(ppm[at]), static_cast<unsigned char>(ppm[at + 1]),
          static_cast<unsigned char>(ppm[at + 2])};
}

}  // namespace

TEST(Grid, FloorFormula) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = ftcn::testing::uniform_int(rng, 1, 64), w = ftcn::testing::uniform_int(rng, 1, 64);
    const int win = ftcn::testing::uniform_int(rng, 1, std::min(h, w));
    const int stride = ftcn::testing::uniform_int(rng, 1, 20);
    const auto [rows, cols] = grid_shape(h, w, win, stride);
    // Count window positions directly.
    std::int64_t r = 0, c = 0;
    for (int y = 0; y + win <= h; y += stride) ++r;
    for (int x = 0; x + win <= w; x += stride) ++c;
    EXPECT_EQ(rows, r);
    EXPECT_EQ(cols, c);
  }
  EXPECT_THROW(grid_shape(8, 8, 9, 1), Error);
  EXPECT_THROW(grid_shape(8, 8, 4, 0), Error);
}

TEST(Grid, Defaults) {
  EXPECT_EQ(default_window(32), 16);
  EXPECT_EQ(default_stride(32), 4);
  const auto [rows, cols] = grid_shape(32, 32, default_window(32), default_stride(32));
  EXPECT_EQ(rows * cols, 25);
}

TEST(Mask, ZeroesOutsideWindowInEveryFrame) {
  std::mt19937_64 rng(2);
  const Tensor clip = ftcn::testing::random_tensor({3, 2, 6, 7}, rng, 0.1, 1);
  const Tensor masked = mask_outside(clip, 1, 2, 3);
  for (std::int64_t p = 0; p < 6; ++p) {
    for (std::int64_t y = 0; y < 6; ++y) {
      for (std::int64_t x = 0; x < 7; ++x) {
        const std::int64_t i = (p * 6 + y) * 7 + x;
        const bool inside = y >= 1 && y < 4 && x >= 2 && x < 5;
        EXPECT_EQ(masked[i], inside ? clip[i] : 0.0f);
      }
    }
  }
}

TEST(Localize, FullFrameWindowMatchesUnmaskedClip) {
  std::mt19937_64 rng(3);
  model::Model m(tiny_spec(), 5);
  const Tensor clip = ftcn::testing::random_tensor({3, 4, 16, 16}, rng, 0, 1);
  const HeatMap map = localize::localize(m, clip, 16, 3, "c");
  ASSERT_EQ(map.grid.shape(), (Shape{1, 1}));
  EXPECT_EQ(map.grid[0], m.predict(clip)[0]);
  EXPECT_EQ(map.clip_id, "c");
}

TEST(Localize, ConstantModelGivesUniformMap) {
  std::mt19937_64 rng(4);
  model::Model m = constant_model(-1.0f);
  const Tensor clip = ftcn::testing::random_tensor({3, 8, 16, 16}, rng, 0, 1);
  const HeatMap map = localize::localize(m, clip, 8, 2);
  EXPECT_EQ(map.grid.shape(), (Shape{5, 5}));
  for (float v : map.grid.data()) EXPECT_EQ(v, map.grid[0]);
  EXPECT_NEAR(map.grid[0], 1 / (1 + std::exp(1.0)), 1e-7);
}

TEST(Localize, CellsAreMaskedScoresInUnitRange) {
  std::mt19937_64 rng(5);
  model::Model m(tiny_spec(), 6);
  const Tensor clip = ftcn::testing::random_tensor({3, 4, 16, 16}, rng, 0, 1);
  const HeatMap map = localize::localize(m, clip, 6, 5);
  ASSERT_EQ(map.grid.shape(), (Shape{3, 3}));
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) {
      const float expected = m.predict(mask_outside(clip, i * 5, j * 5, 6))[0];
      EXPECT_EQ(map.grid[i * 3 + j], expected);
      EXPECT_GE(expected, 0.0f);
      EXPECT_LE(expected, 1.0f);
    }
  }
  EXPECT_THROW(localize::localize(m, clip, 17, 1), Error);
}

TEST(Localize, ArgmaxAndCenters) {
  HeatMap map = map_of(2, 3, {0.1f, 0.7f, 0.7f, 0.2f, 0.3f, 0.0f});
  map.window = 16;
  map.stride = 4;
  EXPECT_EQ(argmax(map), (std::array<std::int64_t, 2>{0, 1}));
  EXPECT_EQ(cell_center(map, 1, 2), (std::array<double, 2>{11.5, 15.5}));
}

TEST(Render, RampEndpoints) {
  EXPECT_EQ(ramp(0.0), (std::array<std::uint8_t, 3>{0, 0, 255}));
  EXPECT_EQ(ramp(1.0), (std::array<std::uint8_t, 3>{255, 0, 0}));
  EXPECT_EQ(ramp(0.5), (std::array<std::uint8_t, 3>{128, 0, 128}));
}

TEST(Render, UniformMapsAreSolid) {
  for (float value : {0.0f, 1.0f}) {
    const std::string ppm = render_ppm(map_of(3, 3, std::vector<float>(9, value)), 5, 7);
    const std::string header = "P6\n7 5\n255\n";
    ASSERT_EQ(ppm.substr(0, header.size()), header);
    ASSERT_EQ(ppm.size(), header.size() + 5 * 7 * 3);
    for (std::int64_t y = 0; y < 5; ++y) {
      for (std::int64_t x = 0; x < 7; ++x) {
        const auto p = pixel(ppm, header.size(), 7, y, x);
        EXPECT_EQ(p[0], value == 1.0f ? 255 : 0);
        EXPECT_EQ(p[1], 0);
        EXPECT_EQ(p[2], value == 1.0f ? 0 : 255);
      }
    }
  }
}

TEST(Render, BilinearCornersAndInterior) {
  const std::string ppm = render_ppm(map_of(2, 2, {0, 1, 1, 0}), 4, 4);
  const std::size_t header = std::string("P6\n4 4\n255\n").size();
  EXPECT_EQ(ppm.size(), header + 4 * 4 * 3);
  EXPECT_EQ(pixel(ppm, header, 4, 0, 0), (std::array<unsigned char, 3>{0, 0, 255}));
  EXPECT_EQ(pixel(ppm, header, 4, 0, 3), (std::array<unsigned char, 3>{255, 0, 0}));
  EXPECT_EQ(pixel(ppm, header, 4, 3, 0), (std::array<unsigned char, 3>{255, 0, 0}));
  EXPECT_EQ(pixel(ppm, header, 4, 3, 3), (std::array<unsigned char, 3>{0, 0, 255}));
  // Align-corners oracle at (1, 2): gy = 1/3, gx = 2/3.
  const double gy = 1.0 / 3, gx = 2.0 / 3;
  const double p = (1 - gy) * (1 - gx) * 0 + (1 - gy) * gx * 1 + gy * (1 - gx) * 1 + gy * gx * 0;
  const auto mid = pixel(ppm, header, 4, 1, 2);
  EXPECT_EQ(mid[0], static_cast<unsigned char>(std::lround(255 * p)));
  EXPECT_EQ(mid[2], static_cast<unsigned char>(std::lround(255 * (1 - p))));
}

TEST(Render, BlendsOverBaseFrame) {
  Tensor base({3, 2, 2}, 0.0f);
  for (std::int64_t i = 0; i < 4; ++i) base[4 + i] = 1.0f;
  const std::string ppm = render_ppm(map_of(1, 1, {1.0f}), 2, 2, base);
  const std::size_t header = std::string("P6\n2 2\n255\n").size();
  EXPECT_EQ(pixel(ppm, header, 2, 1, 1), (std::array<unsigned char, 3>{128, 128, 0}));
  EXPECT_THROW(render_ppm(map_of(1, 1, {1.0f}), 3, 2, base), ShapeError);
}

TEST(Render, WritesFileAtFrameSize) {
  const fs::path out = fs::temp_directory_path() / ("ftcn_heat_" + std::to_string(::getpid()) + ".ppm");
  HeatMap map = map_of(2, 2, {0, 1, 1, 0});
  map.height = 4;
  map.width = 4;
  render_heatmap(map, out);
  EXPECT_EQ(fs::file_size(out), 4u * 4u * 3u + std::string("P6\n4 4\n255\n").size());
  fs::remove(out);
  EXPECT_THROW(render_heatmap(map, "/nonexistent_dir/x.ppm"), Error);
}
