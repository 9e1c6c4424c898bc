#pragma once

// Random valid architecture specs for rewrite properties.
//
// Spatial kernels are odd and every input extent is a multiple of the
// cumulative spatial stride, so a strided conv and its stride-sized pool
// replacement produce the same extent.

#include <map>
#include <random>

#include "ftcn/arch/plan.hpp"

namespace ftcn::testing {

inline arch::ArchSpec random_arch_spec(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto odd = [&](int hi) { return 2 * pick(0, (hi - 1) / 2) + 1; };
  for (;;) {
    const int layers = pick(1, 6);
    std::vector<arch::LayerSpec> specs;
    int spatial_stride = 1;
    for (int i = 0; i < layers; ++i) {
      const int kind = pick(0, 3);
      const Dims3 stride{pick(1, 2), pick(1, 2), pick(1, 2)};
      const std::string name = "l" + std::to_string(i);
      if (kind == 0) {
        specs.push_back(arch::LayerSpec::conv(name, pick(1, 6), {pick(1, 3), odd(7), odd(7)},
                                              stride));
      } else if (kind == 1) {
        // Spatial pool kernels are odd or equal to the stride so extents stay divisible.
        auto kernel_for = [&](int s) { return pick(0, 1) == 1 ? s : odd(3); };
        specs.push_back(arch::LayerSpec::pool(
            name, {pick(1, 2), kernel_for(stride.h), kernel_for(stride.w)}, stride));
      } else if (kind == 2) {
        specs.push_back(arch::LayerSpec::group(name, pick(1, 4), pick(1, 8), pick(1, 3),
                                               {odd(3), odd(3), odd(3)}, stride));
      } else {
        continue;
      }
      spatial_stride *= std::max(stride.h, stride.w);
    }
    if (pick(0, 1) == 1) specs.push_back(arch::LayerSpec::avg_pool("gap"));
    arch::ArchSpec spec;
    spec.layers = std::move(specs);
    const int base = spatial_stride;
    spec.input = {pick(1, 3), pick(4, 12), base * pick(1, 3), base * pick(1, 3)};
    try {
      arch::plan_network(spec);
      return spec;
    } catch (const ShapeError&) {
      // Temporal extents can still run out; draw again.
    }
  }
}

}  // namespace ftcn::testing

namespace ftcn::testing {

/// Output shape per original stage name; an inserted "<name>.pool" layer
/// stands in for the stage it follows.
inline std::map<std::string, arch::FeatureShape> stage_outputs(const arch::ArchSpec& spec) {
  std::map<std::string, arch::FeatureShape> out;
  for (const auto& row : arch::infer_shapes(spec)) {
    std::string name = row.name;
    if (name.ends_with(".pool")) name.resize(name.size() - 5);
    out[name] = row.shape;
  }
  return out;
}

}  // namespace ftcn::testing
