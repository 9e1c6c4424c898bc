#include "ftcn/model/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "ftcn/model/transformer.hpp"

namespace ftcn::model {

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void add_conv(std::map<std::string, Shape>& out, const arch::ConvUnit& u) {
  out[u.name + ".weight"] = {u.out_channels, u.in_channels, u.kernel.t, u.kernel.h, u.kernel.w};
  out[u.name + ".bn.gain"] = {u.out_channels};
  out[u.name + ".bn.shift"] = {u.out_channels};
}

std::string layer_prefix(std::int64_t l) { return "tt.layer" + std::to_string(l); }

std::vector<const arch::ConvUnit*> conv_units(const arch::NetworkPlan& plan) {
  std::vector<const arch::ConvUnit*> units;
  for (const auto& s : plan.stages) {
    if (s.conv) units.push_back(&*s.conv);
    for (const auto& b : s.blocks) {
      units.push_back(&b.reduce);
      units.push_back(&b.middle);
      units.push_back(&b.expand);
      if (b.shortcut) units.push_back(&*b.shortcut);
    }
  }
  return units;
}

}  // namespace

std::map<std::string, Shape> param_shapes(const arch::ArchSpec& spec) {
  const arch::NetworkPlan plan = arch::plan_network(spec);
  if (plan.stages.empty() ||
      plan.stages.back().layer.kind != arch::LayerKind::spatial_avg_pool) {
    throw ShapeError("a model needs a backbone ending in savgpool");
  }
  std::map<std::string, Shape> out;
  for (const auto* u : conv_units(plan)) add_conv(out, *u);
  const std::int64_t c = plan.output.c, n = plan.output.t;
  const arch::HeadSpec& h = spec.head;
  if (h.kind == arch::HeadKind::linear) {
    out["head.weight"] = {1, c};
    out["head.bias"] = {1};
    return out;
  }
  const std::int64_t d = h.dim, inner = h.heads * h.head_dim;
  out["tt.proj.weight"] = {d, c};
  out["tt.cls"] = {d};
  out["tt.pos"] = {n + 1, d};
  for (std::int64_t l = 0; l < h.layers; ++l) {
    const std::string p = layer_prefix(l);
    out[p + ".norm1.gain"] = {d};
    out[p + ".norm1.shift"] = {d};
    out[p + ".attn.q.weight"] = {inner, d};
    out[p + ".attn.q.bias"] = {inner};
    out[p + ".attn.k.weight"] = {inner, d};
    out[p + ".attn.v.weight"] = {inner, d};
    out[p + ".attn.v.bias"] = {inner};
    out[p + ".attn.out.weight"] = {d, inner};
    out[p + ".attn.out.bias"] = {d};
    out[p + ".norm2.gain"] = {d};
    out[p + ".norm2.shift"] = {d};
    out[p + ".mlp.fc1.weight"] = {h.mlp_dim, d};
    out[p + ".mlp.fc1.bias"] = {h.mlp_dim};
    out[p + ".mlp.fc2.weight"] = {d, h.mlp_dim};
    out[p + ".mlp.fc2.bias"] = {d};
  }
  out["tt.norm.gain"] = {d};
  out["tt.norm.shift"] = {d};
  out["head.weight"] = {1, d};
  out["head.bias"] = {1};
  return out;
}

bool decays(const std::string& name) { return name.ends_with(".weight"); }

Model::Model(arch::ArchSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), plan_(arch::plan_network(spec_)) {
  init_params(seed);
}

Model::Model(arch::ArchSpec spec, ParamMap params, StatsMap stats)
    : spec_(std::move(spec)),
      plan_(arch::plan_network(spec_)),
      params_(std::move(params)),
      stats_(std::move(stats)) {
  check_params();
}

void Model::check_params() const {
  const auto shapes = param_shapes(spec_);
  for (const auto& [name, shape] : shapes) {
    const auto it = params_.find(name);
    if (it == params_.end()) throw Error("missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + to_string(it->second.shape()) +
                       ", expected " + to_string(shape));
    }
  }
  for (const auto& [name, _] : params_) {
    if (!shapes.contains(name)) throw Error("unexpected parameter '" + name + "'");
  }
  for (const auto* u : conv_units(plan_)) {
    const auto it = stats_.find(u->name + ".bn");
    if (it == stats_.end()) throw Error("missing running statistics for '" + u->name + "'");
    const Shape want{u->out_channels};
    if (it->second.mean.shape() != want || it->second.var.shape() != want) {
      throw ShapeError("running statistics for '" + u->name + "' do not match its channels");
    }
  }
}

void Model::init_params(std::uint64_t seed) {
  params_.clear();
  stats_.clear();
  for (const auto& [name, shape] : param_shapes(spec_)) {
    std::mt19937_64 rng(seed ^ name_hash(name));
    Tensor t(shape, 0.0f);
    double std_dev = 0;
    if (name.ends_with(".conv_c.bn.gain")) {
      // Residual branches start silent so each block begins as its shortcut.
    } else if (name.ends_with(".gain")) {
      t.fill(1.0f);
    } else if (name == "tt.cls" || name == "tt.pos") {
      std_dev = 0.02;
    } else if (name.ends_with(".weight")) {
      std::int64_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      if (shape.size() == 5) {
        std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      } else {
        std_dev = std::sqrt(2.0 / static_cast<double>(fan_in + shape[0]));
      }
    }
    if (std_dev > 0) {
      std::normal_distribution<double> dist(0.0, std_dev);
      for (auto& v : t.data()) v = static_cast<float>(dist(rng));
    }
    params_.emplace(name, std::move(t));
  }
  for (const auto* u : conv_units(plan_)) {
    stats_[u->name + ".bn"] = {Tensor({u->out_channels}, 0.0f), Tensor({u->out_channels}, 1.0f)};
  }
}

std::int64_t Model::param_count() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

Tensor as_batch(const Tensor& clips) {
  if (clips.rank() == 5) return clips;
  if (clips.rank() == 4) {
    Shape s{1};
    s.insert(s.end(), clips.shape().begin(), clips.shape().end());
    return clips.reshaped(s);
  }
  throw ShapeError("clips must be [C, T, H, W] or [B, C, T, H, W], got " +
                   to_string(clips.shape()));
}

ForwardResult Model::forward(Tape<float>& tape, const Tensor& clips, Mode mode, bool trainable) {
  Tensor batch = as_batch(clips);
  const auto& in = spec_.input;
  const Shape want{batch.dim(0), in.channels, in.frames, in.height, in.width};
  if (batch.shape() != want) {
    throw ShapeError("clip batch " + to_string(batch.shape()) + " does not match the declared input " +
                     to_string(Shape(want.begin() + 1, want.end())));
  }
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : params_) {
    vars.emplace(name, trainable ? tape.parameter(name, value) : tape.constant(value));
  }
  auto var = [&vars](const std::string& name) { return vars.at(name); };

  auto conv_unit = [&](Var x, const arch::ConvUnit& u, bool relu) {
    Var y = nn::conv3d(tape, x, var(u.name + ".weight"), std::nullopt, u.stride,
                       same_padding(u.kernel));
    if (u.pool) y = nn::maxpool3d(tape, y, *u.pool, *u.pool, same_padding(*u.pool));
    y = nn::batch_norm(tape, y, var(u.name + ".bn.gain"), var(u.name + ".bn.shift"), mode,
                       &stats_.at(u.name + ".bn"), kNormEps, norm_momentum_);
    return relu ? nn::relu(tape, y) : y;
  };

  Var x = tape.constant(std::move(batch));
  for (const auto& s : plan_.stages) {
    switch (s.layer.kind) {
      case arch::LayerKind::conv3d:
        x = conv_unit(x, *s.conv, true);
        break;
      case arch::LayerKind::maxpool3d:
        x = nn::maxpool3d(tape, x, s.layer.kernel, s.layer.stride, same_padding(s.layer.kernel));
        break;
      case arch::LayerKind::bottleneck:
        for (const auto& b : s.blocks) {
          Var main = conv_unit(x, b.reduce, true);
          main = conv_unit(main, b.middle, true);
          main = conv_unit(main, b.expand, false);
          const Var skip = b.shortcut ? conv_unit(x, *b.shortcut, false) : x;
          x = nn::relu(tape, nn::add(tape, main, skip));
        }
        break;
      case arch::LayerKind::spatial_avg_pool:
        x = nn::spatial_avg_pool(tape, x);
        break;
    }
  }

  ForwardResult r;
  r.sequence = x;
  const arch::HeadSpec& h = spec_.head;
  if (h.kind == arch::HeadKind::linear) {
    r.features = nn::mean_last_axis(tape, x);
  } else {
    Var z = embed_sequence(tape, x, var("tt.proj.weight"), var("tt.cls"), var("tt.pos"));
    for (std::int64_t l = 0; l < h.layers; ++l) {
      const std::string p = layer_prefix(l);
      const EncoderVars ev{
          var(p + ".norm1.gain"),
          var(p + ".norm1.shift"),
          {var(p + ".attn.q.weight"), var(p + ".attn.q.bias"), var(p + ".attn.k.weight"),
           std::nullopt, var(p + ".attn.v.weight"), var(p + ".attn.v.bias"),
           var(p + ".attn.out.weight"), var(p + ".attn.out.bias")},
          var(p + ".norm2.gain"),
          var(p + ".norm2.shift"),
          var(p + ".mlp.fc1.weight"),
          var(p + ".mlp.fc1.bias"),
          var(p + ".mlp.fc2.weight"),
          var(p + ".mlp.fc2.bias")};
      z = encoder_block(tape, z, ev, static_cast<int>(h.heads), static_cast<int>(h.head_dim));
    }
    r.features = class_feature(tape, z, var("tt.norm.gain"), var("tt.norm.shift"));
  }
  r.logits = head_logit(tape, r.features, var("head.weight"), var("head.bias"));
  return r;
}

void Model::recalibrate_norms(const std::vector<Tensor>& batches) {
  if (batches.empty()) return;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    norm_momentum_ = 1.0 / static_cast<double>(k + 1);
    Tape<float> tape;
    try {
      forward(tape, batches[k], Mode::train, false);
    } catch (...) {
      norm_momentum_ = kNormMomentum;
      throw;
    }
  }
  norm_momentum_ = kNormMomentum;
}

Tensor Model::predict(const Tensor& clips) {
  Tape<float> tape;
  const ForwardResult r = forward(tape, clips, Mode::eval, false);
  Tensor p = tape.value(r.logits);
  for (auto& v : p.data()) v = static_cast<float>(sigmoid_value(v));
  return p;
}

Tensor Model::features(const Tensor& clips) {
  Tape<float> tape;
  return tape.value(forward(tape, clips, Mode::eval, false).features);
}

std::vector<std::int64_t> shuffle_permutation(std::int64_t positions, std::uint64_t seed) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(positions));
  std::iota(perm.begin(), perm.end(), 0);
  if (seed == 0) return perm;
  std::mt19937_64 rng(seed);
  for (std::int64_t i = positions - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

Tensor permute_spatial(const Tensor& clips, const std::vector<std::int64_t>& perm) {
  const Tensor batch = as_batch(clips);
  const std::int64_t plane = batch.dim(3) * batch.dim(4);
  if (static_cast<std::int64_t>(perm.size()) != plane) {
    throw ShapeError("permutation of " + std::to_string(perm.size()) + " positions for a " +
                     std::to_string(batch.dim(3)) + "x" + std::to_string(batch.dim(4)) + " frame");
  }
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p < 0 || p >= plane || seen[static_cast<std::size_t>(p)]) {
      throw Error("spatial permutation is not a bijection");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  Tensor out(clips.shape());
  auto src = clips.data();
  auto dst = out.data();
  const std::int64_t planes = clips.size() / plane;
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t base = p * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      dst[base + i] = src[base + perm[static_cast<std::size_t>(i)]];
    }
  }
  return out;
}

Tensor spatial_shuffle(const Tensor& clips, std::uint64_t seed) {
  const Tensor batch = as_batch(clips);
  return permute_spatial(clips, shuffle_permutation(batch.dim(3) * batch.dim(4), seed));
}

}  // namespace ftcn::model
