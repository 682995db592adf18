/**
 * @file attention.h
 * @brief Relative-position multi-head attention with segment memory, and the
 *        transformer block built from it.
 *
 * A block consumes the current segment's hidden states h [T, d] plus the
 * cached states of previous segments [M, d]. Queries come from h alone;
 * keys/values come from the concatenation. Attention scores decompose per
 * head into a content term (q_i + u) . k_j and a position term
 * (q_i + v) . (R_{i-j} W_kr), where R is a fixed sinusoid table indexed by
 * relative distance and u, v are trained vectors shared across positions.
 */
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "model/config.h"
#include "tensor/ops.h"
#include "tensor/tensor.h"

namespace quartet {

/// Per-layer trainable tensors. Weight matrices are stored [in, out].
template <typename S>
struct LayerParams {
  Tensor<S> w_q, w_ke, w_kr, w_v;  // [d, H*Dh]; content and position keys
                                   // deliberately use separate matrices
  Tensor<S> u, v;                  // [H*Dh], replace position-dependent query terms
  Tensor<S> w_o, b_o;              // [H*Dh, d] attention output projection
  Tensor<S> w_ff1, b_ff1;          // [d, ffn]
  Tensor<S> w_ff2, b_ff2;          // [ffn, d]
  Tensor<S> w_post, b_post;        // [d, d] linear in the second add&norm
  Tensor<S> ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // [d]
};

/// Sinusoid rows for the given relative distances: entry pair (2i, 2i+1) of
/// the row for distance k is (sin, cos) of k / 10000^(2i/dim).
template <typename S>
Tensor<S> sinusoidRows(const std::vector<int>& distances, int dim) {
  if (dim % 2 != 0) {
    throw DataError("sinusoid dimension must be even, got " + std::to_string(dim));
  }
  const int rows = static_cast<int>(distances.size());
  std::vector<S> values(static_cast<size_t>(rows) * dim);
  for (int r = 0; r < rows; ++r) {
    const double k = static_cast<double>(distances[static_cast<size_t>(r)]);
    for (int i = 0; i < dim / 2; ++i) {
      const double angle = k / std::pow(10000.0, 2.0 * i / dim);
      values[static_cast<size_t>(r) * dim + 2 * i] = static_cast<S>(std::sin(angle));
      values[static_cast<size_t>(r) * dim + 2 * i + 1] = static_cast<S>(std::cos(angle));
    }
  }
  return Tensor<S>::fromVector({rows, dim}, std::move(values));
}

/// Sinusoid table for distances 0..n_dist-1 (all a causal window can need).
template <typename S>
Tensor<S> sinusoidTable(int n_dist, int dim) {
  std::vector<int> distances(static_cast<size_t>(n_dist));
  for (int i = 0; i < n_dist; ++i) distances[static_cast<size_t>(i)] = i;
  return sinusoidRows<S>(distances, dim);
}

inline constexpr double kMaskedScore = -1e9;

/// Additive causal mask [q_len, mem_rows + q_len]: query i may attend keys
/// with global index <= mem_rows + i.
template <typename S>
Tensor<S> causalMaskAdditive(int q_len, int mem_rows) {
  const int k_len = mem_rows + q_len;
  std::vector<S> values(static_cast<size_t>(q_len) * k_len, S(0));
  for (int i = 0; i < q_len; ++i) {
    for (int j = mem_rows + i + 1; j < k_len; ++j) {
      values[static_cast<size_t>(i) * k_len + j] = static_cast<S>(kMaskedScore);
    }
  }
  return Tensor<S>::fromVector({q_len, k_len}, std::move(values));
}

template <typename S>
struct AttentionInputs {
  int n_heads = 1;
  int head_dim = 1;
  double dropout = 0.0;
  bool train = false;
  Rng* rng = nullptr;
  /// Precomputed sinusoid @ w_kr [n_dist >= M+T, H*Dh]; generation caches
  /// this across steps since the weights are frozen there.
  std::optional<Tensor<S>> pos_key;
};

/// Multi-head relative attention over concat(memory, h), including the
/// output projection back to model dim.
template <typename S>
Tensor<S> relAttention(const Tensor<S>& h, const Tensor<S>& memory,
                       const LayerParams<S>& params, const Tensor<S>& mask,
                       const AttentionInputs<S>& inputs) {
  const int q_len = h.dim(0);
  const int d = h.dim(1);
  const int mem_rows = memory.defined() ? memory.dim(0) : 0;
  if (memory.defined() && memory.dim(1) != d) {
    throw ShapeError("relAttention: memory " + shapeStr(memory.shape()) +
                     " does not match hidden " + shapeStr(h.shape()));
  }
  const int k_len = mem_rows + q_len;
  const int n_heads = inputs.n_heads;
  const int head_dim = inputs.head_dim;

  Tensor<S> extended = memory.defined() && mem_rows > 0
                           ? concatRows<S>({memory, h})
                           : h;
  Tensor<S> q = matmul(h, params.w_q);                // [T, H*Dh]
  Tensor<S> k = matmul(extended, params.w_ke);        // [M+T, H*Dh]
  Tensor<S> values = matmul(extended, params.w_v);    // [M+T, H*Dh]

  Tensor<S> pos_key;  // [n_dist, H*Dh], row per relative distance
  if (inputs.pos_key.has_value()) {
    pos_key = *inputs.pos_key;
    if (pos_key.dim(0) < k_len) {
      throw ShapeError("relAttention: cached position keys cover " +
                       std::to_string(pos_key.dim(0)) + " distances, need " +
                       std::to_string(k_len));
    }
  } else {
    pos_key = matmul(sinusoidTable<S>(k_len, d), params.w_kr);
  }

  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor<S>> head_outputs;
  head_outputs.reserve(static_cast<size_t>(n_heads));
  for (int head = 0; head < n_heads; ++head) {
    const int col = head * head_dim;
    Tensor<S> q_h = sliceCols(q, col, head_dim);
    Tensor<S> k_h = sliceCols(k, col, head_dim);
    Tensor<S> v_h = sliceCols(values, col, head_dim);
    Tensor<S> r_h = sliceCols(pos_key, col, head_dim);
    Tensor<S> u_head = sliceVector(params.u, col, head_dim);
    Tensor<S> v_head = sliceVector(params.v, col, head_dim);

    Tensor<S> content = matmul(addRowBroadcast(q_h, u_head), transposeLastTwo(k_h));
    Tensor<S> position =
        relPositionGather(matmul(addRowBroadcast(q_h, v_head), transposeLastTwo(r_h)), mem_rows);
    Tensor<S> scores = scale(add(content, position), inv_sqrt_dim);
    Tensor<S> probs = maskedSoftmax(scores, mask);
    probs = dropout(probs, inputs.dropout, inputs.rng, inputs.train);
    head_outputs.push_back(matmul(probs, v_h));
  }
  Tensor<S> merged = n_heads == 1 ? head_outputs[0] : concatLastDim(head_outputs);
  return linear(merged, params.w_o, params.b_o);
}

/// One transformer layer:
///   o   = LayerNorm(attention(h) + h)
///   b   = FFN(o)            (linear, ReLU, linear)
///   out = LayerNorm(Linear(b) + r)   with r = b, or o when configured.
template <typename S>
Tensor<S> transformerBlock(const Tensor<S>& h, const Tensor<S>& memory,
                           const LayerParams<S>& params, const Tensor<S>& mask,
                           const AttentionInputs<S>& inputs, PostResidual post_residual) {
  Tensor<S> attn = relAttention(h, memory, params, mask, inputs);
  attn = dropout(attn, inputs.dropout, inputs.rng, inputs.train);
  Tensor<S> o = layerNorm(add(attn, h), params.ln1_gain, params.ln1_bias);
  Tensor<S> inner = relu(linear(o, params.w_ff1, params.b_ff1));
  inner = dropout(inner, inputs.dropout, inputs.rng, inputs.train);
  Tensor<S> b = linear(inner, params.w_ff2, params.b_ff2);
  Tensor<S> post = dropout(linear(b, params.w_post, params.b_post), inputs.dropout, inputs.rng,
                           inputs.train);
  const Tensor<S>& residual = post_residual == PostResidual::kFfnOut ? b : o;
  return layerNorm(add(post, residual), params.ln2_gain, params.ln2_bias);
}

}  // namespace quartet
