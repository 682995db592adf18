/**
 * @file joint_model.h
 * @brief Four coupled transformer stream networks over the 4-tuple note
 *        representation.
 *
 * Each stream (on2on, on2off, pitch, velocity) owns an embedding table, a
 * resize linear, a stack of relative-attention blocks with its own segment
 * memory, and an output head. The streams couple only at the embedded
 * inputs: the time streams feed their embeddings to pitch and velocity, and
 * pitch additionally feeds velocity, so the input width is d for the time
 * streams, 3d for pitch and 4d for velocity before the resize linear. The
 * training loss is the sum of the four per-stream cross entropies.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "model/attention.h"
#include "model/config.h"
#include "tensor/checkpoint.h"
#include "tensor/ops.h"

namespace quartet {

/// Cached hidden states, per stream and per layer level (level n holds the
/// inputs to block n). Values only; gradients never flow through memory.
template <typename S>
struct JointMemory {
  struct Level {
    std::vector<S> data;  // row-major [rows, model_dim]
    int rows = 0;
  };
  std::array<std::vector<Level>, kNumStreams> streams;

  int64_t totalValues() const {
    int64_t total = 0;
    for (const auto& levels : streams) {
      for (const auto& level : levels) total += static_cast<int64_t>(level.data.size());
    }
    return total;
  }
};

template <typename S>
struct StreamNet {
  Tensor<S> embed;                  // [vocab, d]
  Tensor<S> resize_w, resize_b;     // [k*d, d], [d]
  std::vector<LayerParams<S>> layers;
  Tensor<S> head_w, head_b;         // [d, vocab]
};

/// Number of embedded sequences concatenated into each stream's input.
inline constexpr int kCouplingWidth[kNumStreams] = {1, 1, 3, 4};

template <typename S>
class JointModel {
 public:
  using Tokens = std::array<std::vector<int32_t>, kNumStreams>;

  explicit JointModel(ModelConfig config, uint64_t init_seed = 1)
      : config_(std::move(config)) {
    config_.validate();
    Rng rng(init_seed);
    const int d = config_.model_dim;
    const int attn = config_.attnDim();
    for (int s = 0; s < kNumStreams; ++s) {
      StreamNet<S>& net = streams_[static_cast<size_t>(s)];
      const std::string prefix = kStreamNames[s];
      const int vocab = config_.vocab_sizes[static_cast<size_t>(s)];
      net.embed = registerParam(prefix + ".embed", Tensor<S>::randn({vocab, d}, rng, kInitStd));
      net.resize_w = registerParam(prefix + ".resize.w",
                                   Tensor<S>::randn({kCouplingWidth[s] * d, d}, rng, kInitStd));
      net.resize_b = registerParam(prefix + ".resize.b", Tensor<S>::zeros({d}));
      net.layers.resize(static_cast<size_t>(config_.n_layers));
      for (int layer = 0; layer < config_.n_layers; ++layer) {
        LayerParams<S>& p = net.layers[static_cast<size_t>(layer)];
        const std::string lp = prefix + ".layer" + std::to_string(layer) + ".";
        p.w_q = registerParam(lp + "w_q", Tensor<S>::randn({d, attn}, rng, kInitStd));
        p.w_ke = registerParam(lp + "w_ke", Tensor<S>::randn({d, attn}, rng, kInitStd));
        p.w_kr = registerParam(lp + "w_kr", Tensor<S>::randn({d, attn}, rng, kInitStd));
        p.w_v = registerParam(lp + "w_v", Tensor<S>::randn({d, attn}, rng, kInitStd));
        p.u = registerParam(lp + "u", Tensor<S>::randn({attn}, rng, kInitStd));
        p.v = registerParam(lp + "v", Tensor<S>::randn({attn}, rng, kInitStd));
        p.w_o = registerParam(lp + "w_o", Tensor<S>::randn({attn, d}, rng, kInitStd));
        p.b_o = registerParam(lp + "b_o", Tensor<S>::zeros({d}));
        p.w_ff1 = registerParam(lp + "w_ff1", Tensor<S>::randn({d, config_.ffn_dim}, rng, kInitStd));
        p.b_ff1 = registerParam(lp + "b_ff1", Tensor<S>::zeros({config_.ffn_dim}));
        p.w_ff2 = registerParam(lp + "w_ff2", Tensor<S>::randn({config_.ffn_dim, d}, rng, kInitStd));
        p.b_ff2 = registerParam(lp + "b_ff2", Tensor<S>::zeros({d}));
        p.w_post = registerParam(lp + "w_post", Tensor<S>::randn({d, d}, rng, kInitStd));
        p.b_post = registerParam(lp + "b_post", Tensor<S>::zeros({d}));
        p.ln1_gain = registerParam(lp + "ln1_gain", Tensor<S>::full({d}, S(1)));
        p.ln1_bias = registerParam(lp + "ln1_bias", Tensor<S>::zeros({d}));
        p.ln2_gain = registerParam(lp + "ln2_gain", Tensor<S>::full({d}, S(1)));
        p.ln2_bias = registerParam(lp + "ln2_bias", Tensor<S>::zeros({d}));
      }
      net.head_w = registerParam(prefix + ".head.w", Tensor<S>::randn({d, vocab}, rng, kInitStd));
      net.head_b = registerParam(prefix + ".head.b", Tensor<S>::zeros({vocab}));
    }
  }

  const ModelConfig& config() const { return config_; }
  StreamNet<S>& streamNet(int s) { return streams_[static_cast<size_t>(s)]; }

  std::vector<std::pair<std::string, Tensor<S>>>& namedParameters() { return named_params_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& namedParameters() const {
    return named_params_;
  }
  std::vector<Tensor<S>> parameters() {
    std::vector<Tensor<S>> out;
    out.reserve(named_params_.size());
    for (auto& [name, tensor] : named_params_) out.push_back(tensor);
    return out;
  }
  void zeroGrad() {
    for (auto& [name, tensor] : named_params_) tensor.zeroGrad();
  }

  JointMemory<S> emptyMemory() const {
    JointMemory<S> memory;
    for (auto& levels : memory.streams) {
      levels.resize(static_cast<size_t>(config_.n_layers));
    }
    return memory;
  }

  struct ForwardResult {
    std::array<Tensor<S>, kNumStreams> logits;
  };

  /// Runs one teacher-forced segment through all four stream stacks,
  /// consuming and then advancing the per-stream memories.
  ForwardResult forwardJoint(const Tokens& tokens, JointMemory<S>& memory, bool train = false,
                             Rng* dropout_rng = nullptr) const {
    const size_t seg_len = tokens[0].size();
    for (int s = 1; s < kNumStreams; ++s) {
      if (tokens[static_cast<size_t>(s)].size() != seg_len) {
        throw DataError("stream segments have unequal lengths");
      }
    }
    if (seg_len == 0) throw DataError("empty segment");
    for (auto& levels : memory.streams) {
      if (levels.size() != static_cast<size_t>(config_.n_layers)) {
        throw DataError("memory level count does not match model depth");
      }
    }

    // Embedding coupling per the stream topology.
    std::array<Tensor<S>, kNumStreams> embedded;
    for (int s = 0; s < kNumStreams; ++s) {
      embedded[static_cast<size_t>(s)] =
          embeddingGather(streams_[static_cast<size_t>(s)].embed, tokens[static_cast<size_t>(s)]);
    }
    std::array<Tensor<S>, kNumStreams> coupled;
    coupled[kOn2On] = embedded[kOn2On];
    coupled[kOn2Off] = embedded[kOn2Off];
    coupled[kPitch] = concatLastDim<S>({embedded[kPitch], embedded[kOn2On], embedded[kOn2Off]});
    coupled[kVelocity] = concatLastDim<S>(
        {embedded[kVelocity], embedded[kOn2On], embedded[kOn2Off], embedded[kPitch]});

    ForwardResult result;
    AttentionInputs<S> attn_inputs;
    attn_inputs.n_heads = config_.n_heads;
    attn_inputs.head_dim = config_.head_dim;
    attn_inputs.dropout = config_.dropout;
    attn_inputs.train = train;
    attn_inputs.rng = dropout_rng;

    for (int s = 0; s < kNumStreams; ++s) {
      const StreamNet<S>& net = streams_[static_cast<size_t>(s)];
      auto& levels = memory.streams[static_cast<size_t>(s)];
      Tensor<S> h = linear(coupled[static_cast<size_t>(s)], net.resize_w, net.resize_b);
      h = dropout(h, config_.dropout, dropout_rng, train);
      for (int layer = 0; layer < config_.n_layers; ++layer) {
        auto& level = levels[static_cast<size_t>(layer)];
        Tensor<S> mem_tensor;
        if (level.rows > 0) {
          mem_tensor = Tensor<S>::fromVector({level.rows, config_.model_dim},
                                             std::vector<S>(level.data));
        }
        appendToLevel(level, h);
        Tensor<S> mask = causalMaskAdditive<S>(static_cast<int>(seg_len),
                                               mem_tensor.defined() ? mem_tensor.dim(0) : 0);
        if (pos_key_cache_[static_cast<size_t>(s)].size() ==
            static_cast<size_t>(config_.n_layers)) {
          attn_inputs.pos_key =
              pos_key_cache_[static_cast<size_t>(s)][static_cast<size_t>(layer)];
        } else {
          attn_inputs.pos_key.reset();
        }
        h = transformerBlock(h, mem_tensor, net.layers[static_cast<size_t>(layer)], mask,
                             attn_inputs, config_.post_residual);
      }
      result.logits[static_cast<size_t>(s)] = linear(h, net.head_w, net.head_b);
    }
    return result;
  }

  /// Per-stream mean cross entropies; the joint training loss is their sum.
  std::array<Tensor<S>, kNumStreams> streamLosses(const ForwardResult& forward,
                                                  const Tokens& targets,
                                                  const std::vector<uint8_t>* keep = nullptr) const {
    std::array<Tensor<S>, kNumStreams> losses;
    for (int s = 0; s < kNumStreams; ++s) {
      losses[static_cast<size_t>(s)] =
          crossEntropy(forward.logits[static_cast<size_t>(s)], targets[static_cast<size_t>(s)], keep);
    }
    return losses;
  }

  Tensor<S> jointLoss(const std::array<Tensor<S>, kNumStreams>& losses) const {
    Tensor<S> total = add(losses[0], losses[1]);
    total = add(total, losses[2]);
    return add(total, losses[3]);
  }

  int64_t memoryValueCount(const JointMemory<S>& memory) const { return memory.totalValues(); }

  /// Freezes per-layer position keys for distances 0..n_dist-1. Only valid
  /// while parameters stay fixed (generation); training must not use it.
  void buildPosKeyCache(int n_dist) {
    NoGradGuard guard;
    Tensor<S> table = sinusoidTable<S>(n_dist, config_.model_dim);
    for (int s = 0; s < kNumStreams; ++s) {
      auto& cache = pos_key_cache_[static_cast<size_t>(s)];
      cache.clear();
      for (int layer = 0; layer < config_.n_layers; ++layer) {
        cache.push_back(
            matmul(table, streams_[static_cast<size_t>(s)].layers[static_cast<size_t>(layer)].w_kr));
      }
    }
  }
  void clearPosKeyCache() {
    for (auto& cache : pos_key_cache_) cache.clear();
  }

  // -------------------------------------------------------------------------
  // Checkpointing
  // -------------------------------------------------------------------------

  void addParamsTo(TensorContainer& container) const {
    for (const auto& [name, tensor] : named_params_) container.addTensor(name, tensor);
  }

  void loadParamsFrom(const TensorContainer& container) {
    for (auto& [name, tensor] : named_params_) container.loadInto(name, tensor);
  }

  void saveCheckpoint(const std::filesystem::path& path) const {
    TensorContainer container;
    nlohmann::json meta;
    meta["kind"] = "quartet-model";
    meta["dtype"] = sizeof(S) == 4 ? "f32" : "f64";
    meta["config"] = nlohmann::json::parse(config_.toJson());
    container.metadata = meta.dump();
    addParamsTo(container);
    container.save(path);
  }

  static JointModel<S> loadCheckpoint(const std::filesystem::path& path) {
    const TensorContainer container = TensorContainer::load(path);
    return fromContainer(container);
  }

  static JointModel<S> fromContainer(const TensorContainer& container) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(container.metadata);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad checkpoint metadata: ") + e.what());
    }
    const std::string want = sizeof(S) == 4 ? "f32" : "f64";
    if (meta.value("dtype", "") != want) {
      throw DataError("checkpoint dtype is " + meta.value("dtype", std::string("?")) +
                      ", expected " + want);
    }
    ModelConfig config = ModelConfig::fromJson(meta.at("config").dump());
    JointModel<S> model(config, 0);
    model.loadParamsFrom(container);
    return model;
  }

  static std::string checkpointDtype(const std::filesystem::path& path) {
    const TensorContainer container = TensorContainer::load(path);
    nlohmann::json meta = nlohmann::json::parse(container.metadata);
    return meta.value("dtype", "f32");
  }

 private:
  static constexpr double kInitStd = 0.02;

  Tensor<S> registerParam(const std::string& name, Tensor<S> tensor) {
    tensor.setRequiresGrad(true);
    named_params_.emplace_back(name, tensor);
    return tensor;
  }

  /// Appends the segment's hidden values to a memory level and trims it to
  /// the configured length, oldest rows first.
  void appendToLevel(typename JointMemory<S>::Level& level, const Tensor<S>& h) const {
    const int d = config_.model_dim;
    const int new_rows = h.dim(0);
    level.data.insert(level.data.end(), h.value().begin(), h.value().end());
    level.rows += new_rows;
    if (level.rows > config_.mem_len) {
      const int drop = level.rows - config_.mem_len;
      level.data.erase(level.data.begin(), level.data.begin() + static_cast<int64_t>(drop) * d);
      level.rows = config_.mem_len;
    }
  }

  ModelConfig config_;
  std::array<StreamNet<S>, kNumStreams> streams_;
  std::vector<std::pair<std::string, Tensor<S>>> named_params_;
  std::array<std::vector<Tensor<S>>, kNumStreams> pos_key_cache_;
};

}  // namespace quartet
