/**
 * @file sampler.h
 * @brief Autoregressive generation with bounded per-step cost.
 *
 * Each step feeds only the previously emitted tuple through the model; the
 * segment memories carry everything older, capped at mem_len rows per layer
 * per stream. Live state is therefore constant in the output length, which
 * is what makes arbitrarily long generation possible. The four tokens of a
 * step are sampled independently from their own logits (the streams couple
 * through the embedded inputs of the next step, not through the samples).
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "codec/token_streams.h"
#include "model/joint_model.h"

namespace quartet {

struct SamplerConfig {
  /// Per-stream softmax temperature; 0 selects the argmax token.
  std::array<double, kNumStreams> temperature{1.0, 1.0, 1.0, 1.0};
  /// Per-stream top-k filter; 0 disables filtering. The time streams default
  /// to 32 to keep half-trained models from emitting degenerate huge gaps.
  std::array<int, kNumStreams> top_k{32, 32, 0, 0};
  uint64_t seed = 0;

  void validate() const {
    for (double t : temperature) {
      if (t < 0.0) throw DataError("temperature must be >= 0");
    }
    for (int k : top_k) {
      if (k < 0) throw DataError("top_k must be >= 0");
    }
  }
};

/// Samples one token from logits with temperature and top-k filtering.
/// Tokens below min_token are never emitted (a sounding note needs
/// on2off >= 1 and velocity >= 1). Temperature 0 (argmax) breaks ties
/// toward the lowest token id.
template <typename S>
int32_t sampleToken(std::span<const S> logits, double temperature, int top_k, Rng& rng,
                    int min_token = 0) {
  const int vocab = static_cast<int>(logits.size());
  if (min_token >= vocab) throw DataError("sampleToken: empty candidate range");
  for (S l : logits) {
    if (!std::isfinite(static_cast<double>(l))) {
      throw NumericError("non-finite logit during sampling");
    }
  }
  if (temperature <= 0.0) {
    int best = min_token;
    for (int v = min_token + 1; v < vocab; ++v) {
      if (logits[static_cast<size_t>(v)] > logits[static_cast<size_t>(best)]) best = v;
    }
    return best;
  }
  // Candidate set: all valid tokens, or the k highest-logit ones.
  std::vector<int> candidates(static_cast<size_t>(vocab - min_token));
  for (int v = min_token; v < vocab; ++v) candidates[static_cast<size_t>(v - min_token)] = v;
  if (top_k > 0 && top_k < static_cast<int>(candidates.size())) {
    std::nth_element(candidates.begin(), candidates.begin() + top_k - 1, candidates.end(),
                     [&](int a, int b) {
                       if (logits[static_cast<size_t>(a)] != logits[static_cast<size_t>(b)]) {
                         return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
                       }
                       return a < b;
                     });
    candidates.resize(static_cast<size_t>(top_k));
    std::sort(candidates.begin(), candidates.end());
  }
  double max_l = -std::numeric_limits<double>::infinity();
  for (int v : candidates) {
    max_l = std::max(max_l, static_cast<double>(logits[static_cast<size_t>(v)]) / temperature);
  }
  std::vector<double> weights(candidates.size());
  double total = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double z =
        static_cast<double>(logits[static_cast<size_t>(candidates[i])]) / temperature - max_l;
    weights[i] = std::exp(z);
    total += weights[i];
  }
  const double draw = rng.uniform() * total;
  double cumulative = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    cumulative += weights[i];
    if (draw < cumulative) return candidates[i];
  }
  return candidates.back();
}

template <typename S>
class Generator {
 public:
  Generator(JointModel<S>& model, SamplerConfig config)
      : model_(model), config_(config), rng_(config.seed), memory_(model.emptyMemory()) {
    config_.validate();
    // Frozen weights during generation: position keys are precomputed for
    // the largest window any step can need, which is a full-memory forward
    // over a prime chunk of mem_len positions.
    const int mem_len = model_.config().mem_len;
    model_.buildPosKeyCache(std::max(2, 2 * std::max(1, mem_len)));
  }

  ~Generator() { model_.clearPosKeyCache(); }

  using Sink = std::function<void(int32_t, int32_t, int32_t, int32_t)>;

  /// Emits n_notes tuples after the prime, streaming each one to the sink as
  /// soon as it is sampled. The prime itself is not replayed to the sink.
  void generate(const TokenStreams& prime, int64_t n_notes, const Sink& sink) {
    if (prime.empty()) throw DataError("generation requires a non-empty prime");
    prime.validate();
    NoGradGuard guard;

    // Prime in chunks no longer than the memory window.
    const int chunk = std::max(1, model_.config().mem_len > 0 ? model_.config().mem_len : 1);
    std::array<int32_t, kNumStreams> last{};
    std::array<Tensor<S>, kNumStreams> last_logits;
    for (size_t start = 0; start < prime.size(); start += static_cast<size_t>(chunk)) {
      const size_t end = std::min(prime.size(), start + static_cast<size_t>(chunk));
      typename JointModel<S>::Tokens tokens;
      for (int s = 0; s < kNumStreams; ++s) {
        const auto& stream = prime.stream(s);
        tokens[static_cast<size_t>(s)].assign(stream.begin() + static_cast<int64_t>(start),
                                              stream.begin() + static_cast<int64_t>(end));
      }
      auto forward = model_.forwardJoint(tokens, memory_, /*train=*/false, nullptr);
      last_logits = takeLastPosition(forward);
    }
    for (int s = 0; s < kNumStreams; ++s) {
      last[static_cast<size_t>(s)] = prime.stream(s).back();
    }

    // on2off and velocity tokens of 0 would be silent notes; never emit them.
    constexpr int kMinToken[kNumStreams] = {0, 1, 0, 1};
    for (int64_t note = 0; note < n_notes; ++note) {
      std::array<int32_t, kNumStreams> tuple{};
      for (int s = 0; s < kNumStreams; ++s) {
        tuple[static_cast<size_t>(s)] =
            sampleToken<S>(last_logits[static_cast<size_t>(s)].value(),
                           config_.temperature[static_cast<size_t>(s)],
                           config_.top_k[static_cast<size_t>(s)], rng_, kMinToken[s]);
      }
      sink(tuple[0], tuple[1], tuple[2], tuple[3]);
      last = tuple;
      if (note + 1 == n_notes) break;  // logits for the next step not needed
      typename JointModel<S>::Tokens tokens;
      for (int s = 0; s < kNumStreams; ++s) {
        tokens[static_cast<size_t>(s)] = {last[static_cast<size_t>(s)]};
      }
      auto forward = model_.forwardJoint(tokens, memory_, /*train=*/false, nullptr);
      last_logits = takeLastPosition(forward);
    }
  }

  /// Convenience wrapper returning prime + generated tuples.
  TokenStreams generateCollect(const TokenStreams& prime, int64_t n_notes) {
    TokenStreams out = prime;
    generate(prime, n_notes, [&](int32_t a, int32_t b, int32_t c, int32_t d) {
      out.push(a, b, c, d);
    });
    return out;
  }

  /// Logits the next tuple would be sampled from; exposed for tests.
  std::array<Tensor<S>, kNumStreams> primeLogits(const TokenStreams& prime) {
    NoGradGuard guard;
    typename JointModel<S>::Tokens tokens;
    for (int s = 0; s < kNumStreams; ++s) tokens[static_cast<size_t>(s)] = prime.stream(s);
    JointMemory<S> memory = model_.emptyMemory();
    auto forward = model_.forwardJoint(tokens, memory, /*train=*/false, nullptr);
    return takeLastPosition(forward);
  }

  /// Total cached scalar count across streams and layers (the live state).
  int64_t memoryValueCount() const { return memory_.totalValues(); }

 private:
  std::array<Tensor<S>, kNumStreams> takeLastPosition(
      const typename JointModel<S>::ForwardResult& forward) {
    std::array<Tensor<S>, kNumStreams> out;
    for (int s = 0; s < kNumStreams; ++s) {
      const Tensor<S>& logits = forward.logits[static_cast<size_t>(s)];
      out[static_cast<size_t>(s)] = sliceRowsTail(logits);
    }
    return out;
  }

  static Tensor<S> sliceRowsTail(const Tensor<S>& logits) {
    const int rows = logits.dim(0), cols = logits.dim(1);
    std::vector<S> last(logits.value().begin() + static_cast<int64_t>(rows - 1) * cols,
                        logits.value().end());
    return Tensor<S>::fromVector({1, cols}, std::move(last));
  }

  JointModel<S>& model_;
  SamplerConfig config_;
  Rng rng_;
  JointMemory<S> memory_;
};

}  // namespace quartet
