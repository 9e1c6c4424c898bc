#pragma once

// Differentiable operations recorded on a Tape.
//
// Video tensors use N x C x T x H x W; a 4-axis C x T x H x W input is treated
// as a batch of one and keeps its rank on output. Token tensors use
// [..., S, D] with the feature axis last.

#include <optional>
#include <vector>

#include "ftcn/tensor/tape.hpp"
#include "ftcn/tensor/tensor.hpp"

namespace ftcn {

enum class Mode { train, eval };
enum class NormKind { batch_per_channel, layer_last_axis };
enum class Activation { relu, gelu, sigmoid };

/// Per-channel running statistics carried by batch normalization.
template <typename T>
struct RunningStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;
};

inline constexpr double kNormEps = 1e-5;
inline constexpr double kNormMomentum = 0.1;

/// Symmetric padding used throughout: (K - 1) / 2 per axis.
inline Dims3 same_padding(Dims3 kernel) {
  return {(kernel.t - 1) / 2, (kernel.h - 1) / 2, (kernel.w - 1) / 2};
}

double gelu_value(double x);
double sigmoid_value(double x);

namespace nn {

template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var weights, std::optional<Var> bias, Dims3 stride,
           Dims3 padding);

template <typename T>
Var maxpool3d(Tape<T>& tape, Var x, Dims3 kernel, Dims3 stride, Dims3 padding);

/// Normalizes over every axis except axis 1 (channels). Train mode uses batch
/// statistics and updates `stats` with momentum; eval mode reads `stats`.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gain, Var shift, Mode mode, RunningStats<T>* stats,
               double eps = kNormEps, double momentum = kNormMomentum);

/// Normalizes each row over the last axis.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gain, Var shift, double eps = kNormEps);

template <typename T>
Var normalize(Tape<T>& tape, Var x, NormKind kind, Var gain, Var shift, Mode mode,
              RunningStats<T>* stats, double eps = kNormEps);

template <typename T>
Var activation(Tape<T>& tape, Var x, Activation kind);

template <typename T>
Var relu(Tape<T>& tape, Var x) { return activation(tape, x, Activation::relu); }
template <typename T>
Var gelu(Tape<T>& tape, Var x) { return activation(tape, x, Activation::gelu); }
template <typename T>
Var sigmoid(Tape<T>& tape, Var x) { return activation(tape, x, Activation::sigmoid); }

/// [..., Din] x [Dout, Din]^T + [Dout] -> [..., Dout]
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weights, std::optional<Var> bias);

template <typename T>
Var softmax(Tape<T>& tape, Var x, int axis);

/// Scaled dot-product attention on already-projected q, k, v of shape
/// [..., S, heads*head_dim]. Scale is 1/sqrt(head_dim).
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, int heads, int head_dim);

/// Projection parameters. A key bias only shifts each query's scores by a
/// constant, so the model leaves it out.
struct AttentionVars {
  Var q_weight;
  std::optional<Var> q_bias;
  Var k_weight;
  std::optional<Var> k_bias;
  Var v_weight;
  std::optional<Var> v_bias;
  Var out_weight;
  std::optional<Var> out_bias;
};

/// Multi-head self-attention over tokens [..., S, D].
template <typename T>
Var multi_head_attention(Tape<T>& tape, Var tokens, int heads, int head_dim,
                         const AttentionVars& params);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// x + y where y's shape equals the trailing axes of x.
template <typename T>
Var add_trailing(Tape<T>& tape, Var x, Var y);

template <typename T>
Var scale(Tape<T>& tape, Var x, double factor);

/// [..., A, B] -> [..., B, A]
template <typename T>
Var transpose_last2(Tape<T>& tape, Var x);

/// [..., L, D] with token [D] -> [..., L+1, D], token first.
template <typename T>
Var prepend_token(Tape<T>& tape, Var x, Var token);

/// [..., S, D] -> [..., D] picking row `index` of the S axis.
template <typename T>
Var select_token(Tape<T>& tape, Var x, std::int64_t index);

/// Mean over H x W: [N, C, T, H, W] -> [N, C, T]. The reduction sums the
/// sorted values, so the result depends only on the multiset of each plane.
template <typename T>
Var spatial_avg_pool(Tape<T>& tape, Var x);

/// Mean over the last axis, dropping it.
template <typename T>
Var mean_last_axis(Tape<T>& tape, Var x);

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var mean(Tape<T>& tape, Var x);

/// sum(x * weights) with fixed weights.
template <typename T>
Var dot(Tape<T>& tape, Var x, const BasicTensor<T>& weights);

/// Mean binary cross-entropy over all logits, computed in logit space.
/// Labels must be 0 or 1.
template <typename T>
Var bce_with_logits(Tape<T>& tape, Var logits, const std::vector<T>& labels);

}  // namespace nn
}  // namespace ftcn
