#include "model/config.h"

#include <json.hpp>

#include "common/error.h"

namespace quartet {

using nlohmann::json;

void ModelConfig::validate() const {
  if (n_layers < 1) throw DataError("n_layers must be >= 1");
  if (n_heads < 1) throw DataError("n_heads must be >= 1");
  if (head_dim < 1) throw DataError("head_dim must be >= 1");
  if (model_dim < 2 || model_dim % 2 != 0) {
    throw DataError("model_dim must be even and >= 2 for the sinusoid table");
  }
  if (ffn_dim < 1) throw DataError("ffn_dim must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must be in [0, 1)");
  if (mem_len < 0) throw DataError("mem_len must be >= 0");
  for (int32_t v : vocab_sizes) {
    if (v < 2) throw DataError("vocabulary sizes must be >= 2");
  }
}

std::string postResidualName(PostResidual value) {
  return value == PostResidual::kFfnOut ? "ffn_out" : "attn_out";
}

PostResidual postResidualFromName(const std::string& name) {
  if (name == "ffn_out") return PostResidual::kFfnOut;
  if (name == "attn_out") return PostResidual::kAttnOut;
  throw DataError("post_residual must be 'ffn_out' or 'attn_out', got '" + name + "'");
}

std::string ModelConfig::toJson() const {
  json j;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["head_dim"] = head_dim;
  j["model_dim"] = model_dim;
  j["ffn_dim"] = ffn_dim;
  j["dropout"] = dropout;
  j["mem_len"] = mem_len;
  j["post_residual"] = postResidualName(post_residual);
  for (int s = 0; s < kNumStreams; ++s) {
    j[std::string("vocab_") + kStreamNames[s]] = vocab_sizes[static_cast<size_t>(s)];
  }
  return j.dump();
}

ModelConfig ModelConfig::fromJson(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad model config JSON: ") + e.what());
  }
  ModelConfig config;
  config.n_layers = j.value("n_layers", config.n_layers);
  config.n_heads = j.value("n_heads", config.n_heads);
  config.head_dim = j.value("head_dim", config.head_dim);
  config.model_dim = j.value("model_dim", config.model_dim);
  config.ffn_dim = j.value("ffn_dim", config.ffn_dim);
  config.dropout = j.value("dropout", config.dropout);
  config.mem_len = j.value("mem_len", config.mem_len);
  config.post_residual = postResidualFromName(
      j.value("post_residual", postResidualName(config.post_residual)));
  for (int s = 0; s < kNumStreams; ++s) {
    const std::string key = std::string("vocab_") + kStreamNames[s];
    if (j.contains(key)) config.vocab_sizes[static_cast<size_t>(s)] = j[key];
  }
  config.validate();
  return config;
}

}  // namespace quartet
