#include "ftcn/arch/passes.hpp"

#include <cmath>

#include "ftcn/arch/plan.hpp"

namespace ftcn::arch {

namespace {

bool spatial(Dims3 d) { return d.h > 1 || d.w > 1; }

std::optional<LayerSpec> rule_pool(const LayerSpec& conv) {
  if (!spatial(conv.stride)) return std::nullopt;
  const Dims3 k{1, conv.stride.h, conv.stride.w};
  return LayerSpec::pool(conv.name + ".pool", k, k);
}

/// Replaces each conv's kernel via `kernel_of`, moving spatial strides into pools.
template <typename KernelFn>
ArchSpec pooled_rewrite(const ArchSpec& spec, KernelFn kernel_of) {
  ArchSpec out = spec;
  out.layers.clear();
  for (const auto& l : spec.layers) {
    LayerSpec r = l;
    switch (l.kind) {
      case LayerKind::conv3d: {
        r.kernel = kernel_of(l.kernel);
        r.stride = {l.stride.t, 1, 1};
        out.layers.push_back(r);
        if (auto p = rule_pool(l)) out.layers.push_back(*p);
        continue;
      }
      case LayerKind::bottleneck:
        r.kernel = kernel_of(l.kernel);
        if (spatial(l.stride)) r.down = Downsample::pool;
        break;
      default:
        break;
    }
    out.layers.push_back(r);
  }
  validate(out);
  return out;
}

}  // namespace

ArchSpec ftcn_transform(const ArchSpec& spec) {
  return pooled_rewrite(spec, [](Dims3 k) { return Dims3{k.t, 1, 1}; });
}

Variant parse_variant(std::string_view name) {
  if (name == "spatial") return Variant::spatial;
  if (name == "fhcn") return Variant::fhcn;
  if (name == "fwcn") return Variant::fwcn;
  if (name == "fk3" || name == "ftcn-fk3") return Variant::fk3;
  if (name == "fk5" || name == "ftcn-fk5") return Variant::fk5;
  throw Error("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::spatial: return "spatial";
    case Variant::fhcn: return "fhcn";
    case Variant::fwcn: return "fwcn";
    case Variant::fk3: return "fk3";
    case Variant::fk5: return "fk5";
  }
  return "?";
}

ArchSpec variant_transform(const ArchSpec& spec, Variant kind) {
  switch (kind) {
    case Variant::spatial: {
      ArchSpec out = spec;
      for (auto& l : out.layers) {
        if (l.kind == LayerKind::conv3d || l.kind == LayerKind::bottleneck) l.kernel.t = 1;
      }
      return out;
    }
    case Variant::fhcn:
      return pooled_rewrite(spec, [](Dims3 k) { return Dims3{1, k.h, 1}; });
    case Variant::fwcn:
      return pooled_rewrite(spec, [](Dims3 k) { return Dims3{1, 1, k.w}; });
    case Variant::fk3:
    case Variant::fk5: {
      if (spec.layers.empty() || spec.layers.front().kind != LayerKind::conv3d) {
        throw Error(std::string(to_string(kind)) + " needs a spec whose first layer is a conv");
      }
      ArchSpec out = spec;
      out.layers.front().kernel = kind == Variant::fk3 ? Dims3{5, 3, 3} : Dims3{5, 5, 5};
      out.layers.front().stride = {1, 1, 1};
      return out;
    }
  }
  throw Error("unhandled variant");
}

ArchSpec normalize_pools(const ArchSpec& spec) {
  ArchSpec out = spec;
  out.layers.clear();
  auto smallest_odd_covering = [](int s) { return s % 2 == 1 ? s : s + 1; };
  for (std::size_t i = 0; i < spec.layers.size();) {
    if (spec.layers[i].kind != LayerKind::maxpool3d) {
      out.layers.push_back(spec.layers[i++]);
      continue;
    }
    std::size_t j = i;
    Dims3 stride{1, 1, 1};
    while (j < spec.layers.size() && spec.layers[j].kind == LayerKind::maxpool3d) {
      stride.t *= spec.layers[j].stride.t;
      stride.h *= spec.layers[j].stride.h;
      stride.w *= spec.layers[j].stride.w;
      ++j;
    }
    if (j - i == 1) {
      out.layers.push_back(spec.layers[i]);
    } else {
      const Dims3 kernel{smallest_odd_covering(stride.t), smallest_odd_covering(stride.h),
                         smallest_odd_covering(stride.w)};
      out.layers.push_back(LayerSpec::pool(spec.layers[j - 1].name, kernel, stride));
    }
    i = j;
  }
  return out;
}

bool spatially_pointwise(const ArchSpec& spec) {
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::conv3d && (spatial(l.kernel) || spatial(l.stride))) return false;
    if (l.kind == LayerKind::bottleneck &&
        (spatial(l.kernel) || (spatial(l.stride) && l.down == Downsample::strided_conv))) {
      return false;
    }
  }
  return true;
}

ArchSpec without_spatial_pooling(const ArchSpec& spec) {
  if (!spatially_pointwise(spec)) {
    throw Error("spatial pooling can only be removed from a spec whose convs are 1x1 in space");
  }
  ArchSpec out = spec;
  for (auto& l : out.layers) {
    if (l.kind == LayerKind::maxpool3d || l.kind == LayerKind::bottleneck) {
      if (l.kind == LayerKind::maxpool3d) l.kernel.h = l.kernel.w = 1;
      l.stride.h = l.stride.w = 1;
    }
  }
  return out;
}

ArchSpec collapse_spatial(const ArchSpec& spec) {
  ArchSpec out = without_spatial_pooling(spec);
  out.input.height = out.input.width = 1;
  return out;
}

ArchSpec scale_channels(const ArchSpec& spec, double factor) {
  if (!(factor > 0)) throw Error("channel factor must be positive");
  auto scale = [factor](std::int64_t c) {
    return std::max<std::int64_t>(1, std::llround(static_cast<double>(c) * factor));
  };
  ArchSpec out = spec;
  for (auto& l : out.layers) {
    if (l.kind == LayerKind::conv3d || l.kind == LayerKind::bottleneck) {
      l.out_channels = scale(l.out_channels);
    }
    if (l.kind == LayerKind::bottleneck) l.mid_channels = scale(l.mid_channels);
  }
  return out;
}

ScaledSpec scale_to_params(const ArchSpec& spec, std::int64_t target, bool backbone_only) {
  auto count = [&](double f) {
    const ParamBreakdown b = count_params(scale_channels(spec, f));
    return backbone_only ? b.backbone : b.total();
  };
  double lo = 1e-3, hi = 1.0;
  while (count(hi) < target) {
    hi *= 2;
    if (hi > 1e3) throw Error("cannot reach the requested parameter count");
  }
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) < target ? lo : hi) = mid;
  }
  ScaledSpec best;
  std::int64_t best_gap = -1;
  for (double f : {lo, hi}) {
    const std::int64_t c = count(f);
    const std::int64_t gap = std::llabs(c - target);
    if (best_gap < 0 || gap < best_gap) {
      best = {scale_channels(spec, f), f, c};
      best_gap = gap;
    }
  }
  return best;
}

}  // namespace ftcn::arch
