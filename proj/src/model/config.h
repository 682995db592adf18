#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "codec/token_streams.h"

namespace quartet {

/// Where the second add&norm takes its residual from: the feed-forward
/// output itself (default) or the attention sublayer output.
enum class PostResidual { kFfnOut, kAttnOut };

struct ModelConfig {
  int n_layers = 6;
  int n_heads = 8;
  int head_dim = 64;
  int model_dim = 512;
  int ffn_dim = 2048;
  double dropout = 0.1;
  int mem_len = 1024;
  std::array<int32_t, kNumStreams> vocab_sizes{3841, 3841, 128, 128};
  PostResidual post_residual = PostResidual::kFfnOut;

  int attnDim() const { return n_heads * head_dim; }

  void validate() const;
  std::string toJson() const;
  static ModelConfig fromJson(const std::string& text);
};

std::string postResidualName(PostResidual value);
PostResidual postResidualFromName(const std::string& name);

}  // namespace quartet
