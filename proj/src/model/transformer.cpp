#include "ftcn/model/transformer.hpp"

namespace ftcn::model {

template <typename T>
Var embed_sequence(Tape<T>& tape, Var features, Var projection, Var class_token, Var positions) {
  const auto& f = tape.value(features);
  if (f.rank() != 2 && f.rank() != 3) {
    throw ShapeError("embed_sequence: features must be [C, N] or [B, C, N], got " +
                     to_string(f.shape()));
  }
  const std::int64_t tokens = f.shape().back();
  const auto& pos = tape.value(positions);
  if (pos.rank() != 2 || pos.dim(0) != tokens + 1) {
    throw ShapeError("embed_sequence: " + std::to_string(tokens) +
                     " time slices need position embeddings with " + std::to_string(tokens + 1) +
                     " rows, got " + to_string(pos.shape()));
  }
  Var z = nn::linear(tape, nn::transpose_last2(tape, features), projection, std::nullopt);
  z = nn::prepend_token(tape, z, class_token);
  return nn::add_trailing(tape, z, positions);
}

template <typename T>
Var encoder_block(Tape<T>& tape, Var tokens, const EncoderVars& v, int heads, int head_dim) {
  Var normed = nn::layer_norm(tape, tokens, v.norm1_gain, v.norm1_shift);
  const Var mid =
      nn::add(tape, nn::multi_head_attention(tape, normed, heads, head_dim, v.attention), tokens);
  normed = nn::layer_norm(tape, mid, v.norm2_gain, v.norm2_shift);
  Var hidden = nn::gelu(tape, nn::linear(tape, normed, v.fc1_weight, v.fc1_bias));
  return nn::add(tape, nn::linear(tape, hidden, v.fc2_weight, v.fc2_bias), mid);
}

template <typename T>
Var class_feature(Tape<T>& tape, Var tokens, Var gain, Var shift) {
  return nn::layer_norm(tape, nn::select_token(tape, tokens, 0), gain, shift);
}

template <typename T>
Var head_logit(Tape<T>& tape, Var feature, Var weight, Var bias) {
  const Var out = nn::linear(tape, feature, weight, bias);
  const auto& shape = tape.value(out).shape();
  if (shape.back() != 1) {
    throw ShapeError("head_logit: head must map to one value, got " + to_string(shape));
  }
  Shape squeezed(shape.begin(), shape.end() - 1);
  if (squeezed.empty()) squeezed.push_back(1);
  return nn::reshape(tape, out, squeezed);
}

#define FTCN_INSTANTIATE(T)                                                                  \
  template Var embed_sequence<T>(Tape<T>&, Var, Var, Var, Var);                              \
  template Var encoder_block<T>(Tape<T>&, Var, const EncoderVars&, int, int);                \
  template Var class_feature<T>(Tape<T>&, Var, Var, Var);                                    \
  template Var head_logit<T>(Tape<T>&, Var, Var, Var);

FTCN_INSTANTIATE(float)
FTCN_INSTANTIATE(double)
#undef FTCN_INSTANTIATE

}  // namespace ftcn::model
