#pragma once

#include "ftcn/tensor/ops.hpp"

namespace ftcn::model {

/// Features [B, C, N] (or [C, N]) -> tokens [B, N+1, D]: the class token
/// first, each time slice projected by `projection` [D, C], plus `positions`
/// [N+1, D].
template <typename T>
Var embed_sequence(Tape<T>& tape, Var features, Var projection, Var class_token, Var positions);

struct EncoderVars {
  Var norm1_gain, norm1_shift;
  nn::AttentionVars attention;
  Var norm2_gain, norm2_shift;
  Var fc1_weight, fc1_bias;
  Var fc2_weight, fc2_bias;
};

/// Pre-norm block: z' = MSA(LN(z)) + z, then MLP(LN(z')) + z' with GELU.
template <typename T>
Var encoder_block(Tape<T>& tape, Var tokens, const EncoderVars& vars, int heads, int head_dim);

/// LN of the class-token row: [B, S, D] -> [B, D].
template <typename T>
Var class_feature(Tape<T>& tape, Var tokens, Var gain, Var shift);

/// Single linear map to one logit per row: [B, D] -> [B].
template <typename T>
Var head_logit(Tape<T>& tape, Var feature, Var weight, Var bias);

}  // namespace ftcn::model
