#pragma once

// Expansion of an ArchSpec into concrete convolutions with inferred shapes,
// parameter counting, and the stage report printed by `describe`.

#include <optional>
#include <string>
#include <vector>

#include "ftcn/arch/spec.hpp"

namespace ftcn::arch {

/// Channels x frames x height x width of one sample.
struct FeatureShape {
  std::int64_t c = 0, t = 0, h = 0, w = 0;
  bool operator==(const FeatureShape&) const = default;
};

std::string to_string(const FeatureShape& s);

/// A convolution followed by batch norm, optionally with a (1,Sh,Sw) max pool
/// between them.
struct ConvUnit {
  std::string name;
  std::int64_t in_channels = 0, out_channels = 0;
  Dims3 kernel, stride;
  std::optional<Dims3> pool;  // kernel == stride
  FeatureShape output;
};

struct BlockPlan {
  std::string name;  // e.g. res3.0
  ConvUnit reduce, middle, expand;
  std::optional<ConvUnit> shortcut;
  FeatureShape output;
};

struct StagePlan {
  LayerSpec layer;
  std::optional<ConvUnit> conv;   // conv3d
  std::vector<BlockPlan> blocks;  // bottleneck
  FeatureShape output;
  std::int64_t params = 0;
};

struct NetworkPlan {
  FeatureShape input;
  std::vector<StagePlan> stages;
  FeatureShape output;
};

/// Expands every layer and infers shapes; throws ShapeError naming the
/// first layer whose output is empty or whose residual paths disagree.
NetworkPlan plan_network(const ArchSpec& spec);

struct StageShape {
  std::string name;
  FeatureShape shape;
  bool operator==(const StageShape&) const = default;
};

std::vector<StageShape> infer_shapes(const ArchSpec& spec);

std::int64_t conv_unit_params(const ConvUnit& u);

struct ParamRow {
  std::string name;
  std::int64_t count = 0;
};

struct ParamBreakdown {
  std::vector<ParamRow> rows;
  std::int64_t backbone = 0;
  std::int64_t head = 0;
  std::int64_t total() const { return backbone + head; }
};

/// Conv weights (no conv biases: a norm follows every conv), norm gain and
/// shift per channel, and the head. The head needs the backbone to end in a
/// spatial average pool.
ParamBreakdown count_params(const ArchSpec& spec);

/// Head parameters for features of `channels` x `tokens`.
std::vector<ParamRow> head_params(const HeadSpec& head, std::int64_t channels,
                                  std::int64_t tokens);

/// Aligned text table: stage, layer, output size, cumulative parameters.
std::string describe_text(const ArchSpec& spec);
std::string describe_csv(const ArchSpec& spec);

}  // namespace ftcn::arch
