#pragma once

#include <string_view>
#include <vector>

#include "ftcn/arch/spec.hpp"

namespace ftcn::arch {

struct CanonicalOptions {
  InputShape input;
  /// Every stage width is divided by this (64 -> 4 at 16).
  std::int64_t width_divisor = 1;
  HeadSpec head;
};

/// 3x16x32x32 input, widths / 16, a 32-wide single-layer transformer.
CanonicalOptions toy_options();

/// ftcn | r50 | spatial | fhcn | fwcn | sp | fk3 | fk5
ArchSpec build_canonical(std::string_view name, const CanonicalOptions& options = {});

const std::vector<std::string_view>& canonical_names();

}  // namespace ftcn::arch
