#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ftcn/arch/plan.hpp"
#include "ftcn/tensor/ops.hpp"

namespace ftcn::model {

using ParamMap = std::map<std::string, Tensor>;
using StatsMap = std::map<std::string, RunningStats<float>>;

struct ForwardResult {
  Var logits;    // [B]
  Var features;  // [B, D]: LN(z_L^0), or the time-averaged F for a linear head
  Var sequence;  // [B, C, N]: backbone output F
};

/// A backbone built from an ArchSpec plus its classifier head, in 32-bit.
///
/// Parameters are named by layer path ("res3.0.conv_b.weight",
/// "tt.layer0.attn.q.weight", "head.weight"); batch-norm running statistics
/// live beside them under "<conv>.bn".
class Model {
 public:
  explicit Model(arch::ArchSpec spec, std::uint64_t seed = 0);
  /// Adopts existing parameters; names and shapes must match the spec exactly.
  Model(arch::ArchSpec spec, ParamMap params, StatsMap stats);

  const arch::ArchSpec& spec() const { return spec_; }
  const arch::NetworkPlan& plan() const { return plan_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  StatsMap& norm_stats() { return stats_; }
  const StatsMap& norm_stats() const { return stats_; }
  std::int64_t param_count() const;

  /// Records the forward pass of a clip batch [B, C, T, H, W] (or one clip
  /// [C, T, H, W]). With `trainable`, parameters are tape leaves whose
  /// gradients `Tape::backward` returns by name. Train mode updates the
  /// running statistics.
  ForwardResult forward(Tape<float>& tape, const Tensor& clips, Mode mode, bool trainable);

  /// Replaces every running statistic with the plain average of the batch
  /// statistics over `batches`, each a clip batch [B, C, T, H, W].
  void recalibrate_norms(const std::vector<Tensor>& batches);

  /// Eval-mode probabilities, one per clip.
  Tensor predict(const Tensor& clips);
  /// Eval-mode pre-head features [B, D].
  Tensor features(const Tensor& clips);

 private:
  void init_params(std::uint64_t seed);
  void check_params() const;

  arch::ArchSpec spec_;
  arch::NetworkPlan plan_;
  ParamMap params_;
  StatsMap stats_;
  double norm_momentum_ = kNormMomentum;
};

/// Shapes of every parameter the spec calls for, in name order.
std::map<std::string, Shape> param_shapes(const arch::ArchSpec& spec);

/// True for names that weight decay applies to (conv and linear weights).
bool decays(const std::string& name);

/// One permutation of the H*W positions drawn from `seed`, applied to every
/// frame and channel of a clip [C, T, H, W] or batch [B, C, T, H, W].
/// Seed 0 is the identity.
Tensor spatial_shuffle(const Tensor& clips, std::uint64_t seed);

/// The permutation spatial_shuffle uses for `positions` = H*W.
std::vector<std::int64_t> shuffle_permutation(std::int64_t positions, std::uint64_t seed);
/// Output position i of every frame takes input position perm[i].
Tensor permute_spatial(const Tensor& clips, const std::vector<std::int64_t>& perm);

/// Adds a leading batch axis to a single clip; batches pass through.
Tensor as_batch(const Tensor& clips);

}  // namespace ftcn::model
