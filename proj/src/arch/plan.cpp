#include "ftcn/arch/plan.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "ftcn/tensor/kernels.hpp"
#include "ftcn/tensor/ops.hpp"

namespace ftcn::arch {

std::string to_string(const FeatureShape& s) {
  return std::to_string(s.c) + "x" + std::to_string(s.t) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

namespace {

FeatureShape window(const std::string& name, FeatureShape in, std::int64_t channels, Dims3 kernel,
                    Dims3 stride) {
  const Dims3 pad = same_padding(kernel);
  const FeatureShape out{channels, window_out_extent(in.t, kernel.t, stride.t, pad.t),
                         window_out_extent(in.h, kernel.h, stride.h, pad.h),
                         window_out_extent(in.w, kernel.w, stride.w, pad.w)};
  if (out.t < 1 || out.h < 1 || out.w < 1) {
    throw ShapeError(name + ": empty output from input " + to_string(in) + " with kernel " +
                     to_string(kernel) + " stride " + to_string(stride));
  }
  return out;
}

ConvUnit make_unit(std::string name, FeatureShape in, std::int64_t out, Dims3 kernel,
                   Dims3 stride, std::optional<Dims3> pool) {
  ConvUnit u{std::move(name), in.c, out, kernel, stride, pool, {}};
  u.output = window(u.name, in, out, kernel, stride);
  if (pool) u.output = window(u.name + ".pool", u.output, out, *pool, *pool);
  return u;
}

bool spatial(Dims3 d) { return d.h > 1 || d.w > 1; }

std::vector<BlockPlan> plan_group(const LayerSpec& l, FeatureShape in) {
  std::vector<BlockPlan> blocks;
  for (std::int64_t i = 0; i < l.repeat; ++i) {
    BlockPlan b;
    b.name = l.name + "." + std::to_string(i);
    Dims3 stride{1, 1, 1};
    std::optional<Dims3> pool;
    if (i == 0) {
      stride = l.stride;
      if (l.down == Downsample::pool) {
        stride = {l.stride.t, 1, 1};
        if (spatial(l.stride)) pool = Dims3{1, l.stride.h, l.stride.w};
      }
    }
    b.reduce = make_unit(b.name + ".conv_a", in, l.mid_channels, {1, 1, 1}, {1, 1, 1}, {});
    b.middle = make_unit(b.name + ".conv_b", b.reduce.output, l.mid_channels, l.kernel, stride,
                         pool);
    b.expand = make_unit(b.name + ".conv_c", b.middle.output, l.out_channels, {1, 1, 1},
                         {1, 1, 1}, {});
    if (i == 0) {
      b.shortcut = make_unit(b.name + ".shortcut", in, l.out_channels, {1, 1, 1}, stride, pool);
      if (b.shortcut->output != b.expand.output) {
        throw ShapeError(b.name + ": residual paths disagree (" + to_string(b.expand.output) +
                         " vs shortcut " + to_string(b.shortcut->output) + ")");
      }
    }
    b.output = b.expand.output;
    in = b.output;
    blocks.push_back(std::move(b));
  }
  return blocks;
}

}  // namespace

std::int64_t conv_unit_params(const ConvUnit& u) {
  const std::int64_t k = static_cast<std::int64_t>(u.kernel.t) * u.kernel.h * u.kernel.w;
  return u.in_channels * u.out_channels * k + 2 * u.out_channels;
}

NetworkPlan plan_network(const ArchSpec& spec) {
  validate(spec);
  NetworkPlan plan;
  plan.input = {spec.input.channels, spec.input.frames, spec.input.height, spec.input.width};
  FeatureShape cur = plan.input;
  for (const auto& l : spec.layers) {
    StagePlan s;
    s.layer = l;
    switch (l.kind) {
      case LayerKind::conv3d:
        s.conv = make_unit(l.name, cur, l.out_channels, l.kernel, l.stride, {});
        s.output = s.conv->output;
        s.params = conv_unit_params(*s.conv);
        break;
      case LayerKind::maxpool3d:
        s.output = window(l.name, cur, cur.c, l.kernel, l.stride);
        break;
      case LayerKind::bottleneck:
        s.blocks = plan_group(l, cur);
        s.output = s.blocks.back().output;
        for (const auto& b : s.blocks) {
          s.params += conv_unit_params(b.reduce) + conv_unit_params(b.middle) +
                      conv_unit_params(b.expand);
          if (b.shortcut) s.params += conv_unit_params(*b.shortcut);
        }
        break;
      case LayerKind::spatial_avg_pool:
        s.output = {cur.c, cur.t, 1, 1};
        break;
    }
    cur = s.output;
    plan.stages.push_back(std::move(s));
  }
  plan.output = cur;
  return plan;
}

std::vector<StageShape> infer_shapes(const ArchSpec& spec) {
  const NetworkPlan plan = plan_network(spec);
  std::vector<StageShape> out;
  for (const auto& s : plan.stages) out.push_back({s.layer.name, s.output});
  return out;
}

std::vector<ParamRow> head_params(const HeadSpec& head, std::int64_t channels,
                                  std::int64_t tokens) {
  if (head.kind == HeadKind::linear) return {{"head", channels + 1}};
  const std::int64_t d = head.dim, inner = head.heads * head.head_dim, mlp = head.mlp_dim;
  std::vector<ParamRow> rows{
      {"tt.proj", channels * d}, {"tt.cls", d}, {"tt.pos", (tokens + 1) * d}};
  for (std::int64_t l = 0; l < head.layers; ++l) {
    const std::string p = "tt.layer" + std::to_string(l);
    // q and v carry biases; a key bias cannot change the attention weights.
    rows.push_back({p + ".attn", 3 * d * inner + 2 * inner + inner * d + d});
    rows.push_back({p + ".mlp", d * mlp + mlp + mlp * d + d});
    rows.push_back({p + ".norms", 4 * d});
  }
  rows.push_back({"tt.norm", 2 * d});
  rows.push_back({"head", d + 1});
  return rows;
}

ParamBreakdown count_params(const ArchSpec& spec) {
  const NetworkPlan plan = plan_network(spec);
  ParamBreakdown b;
  for (const auto& s : plan.stages) {
    if (s.params > 0) {
      b.rows.push_back({s.layer.name, s.params});
      b.backbone += s.params;
    }
  }
  if (plan.stages.empty() || plan.stages.back().layer.kind != LayerKind::spatial_avg_pool) {
    throw ShapeError("the head needs a backbone ending in savgpool");
  }
  for (auto& r : head_params(spec.head, plan.output.c, plan.output.t)) {
    b.head += r.count;
    b.rows.push_back(std::move(r));
  }
  return b;
}

namespace {

std::string strides(Dims3 d) {
  return std::to_string(d.t) + "," + std::to_string(d.h) + "," + std::to_string(d.w);
}

std::string layer_text(const LayerSpec& l) {
  std::ostringstream os;
  switch (l.kind) {
    case LayerKind::conv3d:
      os << to_string(l.kernel) << ", " << l.out_channels << ", stride " << strides(l.stride);
      break;
    case LayerKind::maxpool3d:
      os << "max " << to_string(l.kernel) << ", stride " << strides(l.stride);
      break;
    case LayerKind::bottleneck:
      os << "[1x1x1, " << l.mid_channels << "; " << to_string(l.kernel) << ", " << l.mid_channels
         << "; 1x1x1, " << l.out_channels << "] x" << l.repeat;
      if (l.stride != Dims3{1, 1, 1}) {
        os << (l.down == Downsample::pool ? ", max pool after " : ", stride ")
           << strides(l.stride);
      }
      break;
    case LayerKind::spatial_avg_pool:
      os << "spatial average pool";
      break;
  }
  return os.str();
}

struct ReportRow {
  std::string stage, layer, output, params, cumulative;
};

std::vector<ReportRow> report_rows(const ArchSpec& spec, bool& pooled) {
  const NetworkPlan plan = plan_network(spec);
  std::vector<ReportRow> rows;
  std::int64_t cumulative = 0;
  pooled = false;
  for (const auto& s : plan.stages) {
    cumulative += s.params;
    std::string out = to_string(s.output);
    if (s.layer.kind == LayerKind::maxpool3d) {
      out += " *";
      pooled = true;
    }
    rows.push_back({s.layer.name, layer_text(s.layer), out, std::to_string(s.params),
                    std::to_string(cumulative)});
  }
  const bool has_head = !plan.stages.empty() &&
                        plan.stages.back().layer.kind == LayerKind::spatial_avg_pool;
  if (has_head) {
    for (const auto& r : head_params(spec.head, plan.output.c, plan.output.t)) {
      cumulative += r.count;
      rows.push_back({r.name, "", "", std::to_string(r.count), std::to_string(cumulative)});
    }
  }
  return rows;
}

}  // namespace

std::string describe_text(const ArchSpec& spec) {
  bool pooled = false;
  const auto rows = report_rows(spec, pooled);
  ReportRow header{"stage", "layer", "output size", "params", "cumulative"};
  std::size_t w0 = header.stage.size(), w1 = header.layer.size(), w2 = header.output.size(),
              w3 = header.params.size();
  for (const auto& r : rows) {
    w0 = std::max(w0, r.stage.size());
    w1 = std::max(w1, r.layer.size());
    w2 = std::max(w2, r.output.size());
    w3 = std::max(w3, r.params.size());
  }
  std::ostringstream os;
  const auto& in = spec.input;
  os << "input " << in.channels << "x" << in.frames << "x" << in.height << "x" << in.width
     << "\n";
  auto line = [&](const ReportRow& r) {
    os << std::left << std::setw(static_cast<int>(w0)) << r.stage << "  "
       << std::setw(static_cast<int>(w1)) << r.layer << "  " << std::setw(static_cast<int>(w2))
       << r.output << "  " << std::right << std::setw(static_cast<int>(w3)) << r.params << "  "
       << r.cumulative << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (pooled) {
    os << "* max pooling keeps the channel count of its input (e.g. pool1 of the "
          "canonical FTCN outputs 64 channels, not 256)\n";
  }
  if (!rows.empty()) os << "total parameters: " << rows.back().cumulative << "\n";
  return os.str();
}

std::string describe_csv(const ArchSpec& spec) {
  bool pooled = false;
  const auto rows = report_rows(spec, pooled);
  std::ostringstream os;
  os << "stage,layer,output,params,cumulative\n";
  for (const auto& r : rows) {
    std::string out = r.output;
    if (out.ends_with(" *")) out.resize(out.size() - 2);
    os << r.stage << ",\"" << r.layer << "\"," << out << "," << r.params << "," << r.cumulative
       << "\n";
  }
  return os.str();
}

}  // namespace ftcn::arch
