#include <doctest.h>

#include <cmath>

#include "codec/codec.h"
#include "sample/sampler.h"
#include "support/fixtures.h"

using namespace quartet;

namespace {

ModelConfig samplerModelConfig(int mem_len = 8) {
  ModelConfig config;
  config.n_layers = 2;
  config.n_heads = 2;
  config.head_dim = 4;
  config.model_dim = 8;
  config.ffn_dim = 32;
  config.dropout = 0.0;
  config.mem_len = mem_len;
  return config;
}

TokenStreams smallPrime() {
  TokenStreams prime;
  prime.push(0, 96, 60, 80);
  prime.push(96, 96, 64, 72);
  prime.push(48, 48, 67, 75);
  return prime;
}

}  // namespace

TEST_CASE("sampleToken") {
  Rng rng(3);
  std::vector<double> logits{0.0, 5.0, 1.0, 4.9, -2.0};

  SUBCASE("temperature zero is argmax with low-index tie break") {
    CHECK(sampleToken<double>(logits, 0.0, 0, rng) == 1);
    std::vector<double> tie{2.0, 7.0, 7.0};
    CHECK(sampleToken<double>(tie, 0.0, 0, rng) == 1);
  }
  SUBCASE("top-k restricts to the k best tokens") {
    for (int i = 0; i < 200; ++i) {
      const int token = sampleToken<double>(logits, 1.0, 2, rng);
      CHECK((token == 1 || token == 3));
    }
  }
  SUBCASE("min_token excludes the leading ids") {
    std::vector<double> favor_zero{10.0, 0.0, -1.0};
    for (int i = 0; i < 50; ++i) {
      CHECK(sampleToken<double>(favor_zero, 1.0, 0, rng, 1) >= 1);
    }
    CHECK(sampleToken<double>(favor_zero, 0.0, 0, rng, 1) == 1);
  }
  SUBCASE("non-finite logits abort") {
    std::vector<double> bad{0.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(sampleToken<double>(bad, 1.0, 0, rng), NumericError);
  }
  SUBCASE("negative temperature is rejected by the config") {
    SamplerConfig config;
    config.temperature[0] = -1.0;
    CHECK_THROWS_AS(config.validate(), DataError);
  }
}

TEST_CASE("generation is deterministic for a fixed seed") {
  JointModel<double> model(samplerModelConfig(), 5);
  SamplerConfig config;
  config.seed = 42;

  auto runOnce = [&] {
    Generator<double> generator(model, config);
    return generator.generateCollect(smallPrime(), 40);
  };
  const TokenStreams a = runOnce();
  const TokenStreams b = runOnce();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.on2on[i] == b.on2on[i]);
    CHECK(a.on2off[i] == b.on2off[i]);
    CHECK(a.pitch[i] == b.pitch[i]);
    CHECK(a.velocity[i] == b.velocity[i]);
  }

  SamplerConfig argmax_config;
  argmax_config.temperature = {0.0, 0.0, 0.0, 0.0};
  Generator<double> g1(model, argmax_config);
  Generator<double> g2(model, argmax_config);
  const TokenStreams c = g1.generateCollect(smallPrime(), 25);
  const TokenStreams d = g2.generateCollect(smallPrime(), 25);
  for (size_t i = 0; i < c.size(); ++i) {
    CHECK(c.pitch[i] == d.pitch[i]);
    CHECK(c.on2on[i] == d.on2on[i]);
  }
}

TEST_CASE("first generated tuple matches a teacher-forced forward over the prime") {
  JointModel<double> model(samplerModelConfig(/*mem_len=*/16), 9);
  const TokenStreams prime = smallPrime();

  SamplerConfig config;
  config.temperature = {0.0, 0.0, 0.0, 0.0};  // argmax makes the check exact
  Generator<double> generator(model, config);
  const auto logits = generator.primeLogits(prime);

  Generator<double> fresh(model, config);
  const TokenStreams out = fresh.generateCollect(prime, 1);
  const int min_token[kNumStreams] = {0, 1, 0, 1};
  for (int s = 0; s < kNumStreams; ++s) {
    const auto& row = logits[static_cast<size_t>(s)].value();
    int best = min_token[s];
    for (int v = min_token[s] + 1; v < static_cast<int>(row.size()); ++v) {
      if (row[static_cast<size_t>(v)] > row[static_cast<size_t>(best)]) best = v;
    }
    CHECK(out.stream(s).back() == best);
  }
}

TEST_CASE("top-k of 1 equals argmax") {
  JointModel<double> model(samplerModelConfig(), 13);
  SamplerConfig argmax_config;
  argmax_config.temperature = {0.0, 0.0, 0.0, 0.0};
  SamplerConfig topk_config;
  topk_config.top_k = {1, 1, 1, 1};
  topk_config.seed = 77;

  Generator<double> ga(model, argmax_config);
  Generator<double> gk(model, topk_config);
  const TokenStreams a = ga.generateCollect(smallPrime(), 30);
  const TokenStreams k = gk.generateCollect(smallPrime(), 30);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a.on2on[i] == k.on2on[i]);
    CHECK(a.on2off[i] == k.on2off[i]);
    CHECK(a.pitch[i] == k.pitch[i]);
    CHECK(a.velocity[i] == k.velocity[i]);
  }
}

TEST_CASE("live state stays bounded during long generation") {
  const ModelConfig config = samplerModelConfig(/*mem_len=*/8);
  JointModel<double> model(config, 21);
  SamplerConfig sampler_config;
  sampler_config.seed = 5;
  Generator<double> generator(model, sampler_config);

  const int64_t expected_bound = static_cast<int64_t>(kNumStreams) * config.n_layers *
                                 config.mem_len * config.model_dim;
  std::vector<int64_t> footprints;
  int64_t count = 0;
  generator.generate(smallPrime(), 300, [&](int32_t, int32_t, int32_t, int32_t) {
    ++count;
    if (count % 50 == 0) footprints.push_back(generator.memoryValueCount());
  });
  CHECK(count == 300);
  for (int64_t footprint : footprints) {
    CHECK(footprint == expected_bound);  // constant after the first mem_len steps
  }
}

TEST_CASE("pipeline closure: decoded generation has prime + requested notes") {
  JointModel<double> model(samplerModelConfig(), 33);
  SamplerConfig config;
  config.seed = 11;
  Generator<double> generator(model, config);
  const TokenStreams prime = smallPrime();
  const TokenStreams out = generator.generateCollect(prime, 20);
  CHECK(out.size() == prime.size() + 20);
  const MidiScore score = decode(out, CodecConfig{});
  CHECK(score.notes.size() == prime.size() + 20);
  // Every emitted token is structurally valid.
  out.validate();
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out.on2off[i] >= 1);
    CHECK(out.velocity[i] >= 1);
  }
}

TEST_CASE("generation requires a non-empty prime") {
  JointModel<double> model(samplerModelConfig(), 3);
  Generator<double> generator(model, SamplerConfig{});
  TokenStreams empty;
  CHECK_THROWS_AS(generator.generateCollect(empty, 5), DataError);
}

TEST_CASE("prime longer than mem_len is consumed in chunks without error") {
  JointModel<double> model(samplerModelConfig(/*mem_len=*/4), 17);
  TokenStreams prime;
  for (int i = 0; i < 19; ++i) prime.push(i == 0 ? 0 : 48, 48, 60 + i % 12, 80);
  SamplerConfig config;
  config.seed = 23;
  Generator<double> generator(model, config);
  const TokenStreams out = generator.generateCollect(prime, 5);
  CHECK(out.size() == prime.size() + 5);
}
