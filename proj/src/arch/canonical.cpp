#include "ftcn/arch/canonical.hpp"

#include "ftcn/arch/passes.hpp"
#include "ftcn/arch/plan.hpp"

namespace ftcn::arch {

CanonicalOptions toy_options() {
  CanonicalOptions o;
  o.input = {3, 16, 32, 32};
  o.width_divisor = 16;
  o.head = {HeadKind::transformer, 1, 32, 4, 8, 64};
  return o;
}

const std::vector<std::string_view>& canonical_names() {
  static const std::vector<std::string_view> names{"ftcn", "r50", "spatial", "fhcn",
                                                   "fwcn", "sp",  "fk3",     "fk5"};
  return names;
}

namespace {

struct Stage {
  const char* name;
  std::int64_t mid, out, repeat;
  int down;  // spatial downsampling factor of the first block
};

constexpr Stage kStages[] = {
    {"res2", 64, 256, 3, 1},
    {"res3", 128, 512, 4, 2},
    {"res4", 256, 1024, 6, 2},
    {"res5", 512, 2048, 3, 2},
};

ArchSpec backbone(const CanonicalOptions& o, bool fully_temporal) {
  if (o.width_divisor < 1) throw Error("width divisor must be >= 1");
  auto width = [&](std::int64_t c) { return std::max<std::int64_t>(1, c / o.width_divisor); };
  ArchSpec spec;
  spec.input = o.input;
  spec.head = o.head;
  if (fully_temporal) {
    spec.layers.push_back(LayerSpec::conv("conv1", width(64), {5, 1, 1}, {1, 1, 1}));
    spec.layers.push_back(LayerSpec::pool("pool1", {1, 5, 5}, {1, 4, 4}));
  } else {
    spec.layers.push_back(LayerSpec::conv("conv1", width(64), {5, 7, 7}, {1, 2, 2}));
    spec.layers.push_back(LayerSpec::pool("pool1", {1, 3, 3}, {1, 2, 2}));
  }
  for (const Stage& s : kStages) {
    const Dims3 kernel = fully_temporal ? Dims3{3, 1, 1} : Dims3{3, 3, 3};
    const Dims3 stride{1, s.down, s.down};
    const Downsample down =
        fully_temporal && s.down > 1 ? Downsample::pool : Downsample::strided_conv;
    spec.layers.push_back(
        LayerSpec::group(s.name, width(s.mid), width(s.out), s.repeat, kernel, stride, down));
    if (std::string_view(s.name) == "res2") {
      spec.layers.push_back(LayerSpec::pool("pool2", {2, 1, 1}, {2, 1, 1}));
    }
  }
  spec.layers.push_back(LayerSpec::avg_pool("savgpool"));
  validate(spec);
  return spec;
}

}  // namespace

ArchSpec build_canonical(std::string_view name, const CanonicalOptions& options) {
  if (name == "ftcn") return backbone(options, true);
  if (name == "r50") return backbone(options, false);
  if (name == "spatial") return variant_transform(backbone(options, false), Variant::spatial);
  if (name == "fhcn") return variant_transform(backbone(options, false), Variant::fhcn);
  if (name == "fwcn") return variant_transform(backbone(options, false), Variant::fwcn);
  if (name == "fk3") return variant_transform(backbone(options, true), Variant::fk3);
  if (name == "fk5") return variant_transform(backbone(options, true), Variant::fk5);
  if (name == "sp") {
    const std::int64_t target = count_params(backbone(options, true)).backbone;
    return scale_to_params(backbone(options, false), target, true).spec;
  }
  throw Error("unknown canonical architecture '" + std::string(name) +
              "' (expected ftcn, r50, spatial, fhcn, fwcn, sp, fk3 or fk5)");
}

}  // namespace ftcn::arch
