#pragma once

#include <string_view>

#include "ftcn/arch/spec.hpp"

namespace ftcn::arch {

/// conv (Kt,Kh,Kw) stride (St,Sh,Sw) -> conv (Kt,1,1) stride (St,1,1), followed
/// by max pool (1,Sh,Sw) when Sh or Sw > 1. Inside bottleneck groups the middle
/// conv loses its spatial kernel and spatial downsampling moves to pools.
/// A top-level inserted pool is named "<conv>.pool".
ArchSpec ftcn_transform(const ArchSpec& spec);

enum class Variant { spatial, fhcn, fwcn, fk3, fk5 };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

/// spatial: temporal kernels become 1, strides untouched.
/// fhcn / fwcn: kernels become (1,Kh,1) / (1,1,Kw) with the FTCN pooling rule.
/// fk3 / fk5: the first layer (must be a conv) becomes (5,3,3) / (5,5,5), stride 1.
ArchSpec variant_transform(const ArchSpec& spec, Variant kind);

/// Fuses each run of adjacent max pools into one: strides multiply, the kernel
/// per axis is the smallest odd size covering the fused stride, and the fused
/// pool takes the name of the last pool in the run. Used for equality checks.
ArchSpec normalize_pools(const ArchSpec& spec);

/// Sets every spatial pooling component to 1 (max pools and pool-mode
/// bottleneck downsampling). Requires a spec whose convs all have spatial
/// kernel and stride 1.
ArchSpec without_spatial_pooling(const ArchSpec& spec);

/// without_spatial_pooling with a 1x1 input frame.
ArchSpec collapse_spatial(const ArchSpec& spec);

/// Multiplies every conv and bottleneck channel count by `factor`, rounding
/// to the nearest integer and keeping at least one channel.
ArchSpec scale_channels(const ArchSpec& spec, double factor);

/// Bisects a uniform channel factor so that the parameter count of
/// scale_channels(spec, f) is as close as possible to `target`.
/// `backbone_only` excludes the head from the count.
struct ScaledSpec {
  ArchSpec spec;
  double factor = 1;
  std::int64_t params = 0;
};
ScaledSpec scale_to_params(const ArchSpec& spec, std::int64_t target, bool backbone_only);

/// True when every conv has spatial kernel 1 and spatial stride 1.
bool spatially_pointwise(const ArchSpec& spec);

}  // namespace ftcn::arch
