#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ftcn::model {

struct GradSuiteOptions {
  /// Random shapes per operation.
  int trials = 5;
  std::uint64_t seed = 0;
  double step = 1e-4;
  double tolerance = 1e-4;
  /// Entries probed per input tensor.
  std::int64_t max_entries = 16;
};

struct GradSuiteRow {
  std::string op;
  int trial = 0;
  /// Main input shape, e.g. "2x3x4x4x4".
  std::string shape;
  double max_rel_error = 0;
  std::int64_t probed = 0;
  bool passed = false;
};

/// conv3d, linear, normalize_batch, normalize_layer, gelu, softmax, multi_head_attention,
/// encoder_block, bce_loss
const std::vector<std::string>& gradient_suite_ops();

/// 64-bit central-difference checks of every suite op on `trials` random shapes.
std::vector<GradSuiteRow> gradient_suite(const GradSuiteOptions& options = {});

/// Header "op,trial,shape,max_rel_error,probed,passed".
std::string gradient_suite_csv(const std::vector<GradSuiteRow>& rows);

}  // namespace ftcn::model
