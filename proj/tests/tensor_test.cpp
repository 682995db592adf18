#include <doctest.h>

#include <cmath>

#include "support/gradcheck.h"
#include "support/test_util.h"
#include "tensor/adam.h"
#include "tensor/checkpoint.h"
#include "tensor/ops.h"
#include "tensor/tensor.h"

using namespace quartet;
using quartet::test::gradCheckParam;
using quartet::test::sampleIndices;

namespace {

Tensor<double> randomParam(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor<double> t = Tensor<double>::randn(std::move(shape), rng, stddev);
  t.setRequiresGrad(true);
  return t;
}

}  // namespace

TEST_CASE("matmul: identity and shape errors") {
  Tensor<double> identity = Tensor<double>::fromVector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<double> m = Tensor<double>::fromVector({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor<double> out = matmul(identity, m);
  for (int i = 0; i < 6; ++i) CHECK(out.value()[i] == doctest::Approx(m.value()[i]));

  // The error names both shapes.
  Tensor<double> bad = Tensor<double>::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(m, bad), doctest::Contains("[3,2]"), ShapeError);
}

TEST_CASE("concat of three [2,512] tensors gives [2,1536]") {
  Rng rng(7);
  std::vector<Tensor<double>> parts;
  for (int i = 0; i < 3; ++i) parts.push_back(Tensor<double>::randn({2, 512}, rng, 1.0));
  Tensor<double> out = concatLastDim(parts);
  CHECK(out.shape() == Shape{2, 1536});
  CHECK(out.value()[512] == parts[1].value()[0]);
  CHECK(out.value()[1536 + 1024 + 5] == parts[2].value()[512 + 5]);
}

TEST_CASE("gradcheck: every differentiable op against central differences") {
  Rng rng(42);

  SUBCASE("matmul") {
    Tensor<double> a = randomParam({3, 4}, rng);
    Tensor<double> b = randomParam({4, 5}, rng);
    auto loss = [&] {
      Tensor<double> y = matmul(a, b);
      return sumAll(mul(y, y));
    };
    CHECK(gradCheckParam(a, loss, sampleIndices(a.numel(), 12)) < 1e-6);
    CHECK(gradCheckParam(b, loss, sampleIndices(b.numel(), 12)) < 1e-6);
  }

  SUBCASE("add, sub, mul, scale, addRowBroadcast") {
    Tensor<double> a = randomParam({4, 3}, rng);
    Tensor<double> b = randomParam({4, 3}, rng);
    Tensor<double> row = randomParam({3}, rng);
    auto loss = [&] {
      Tensor<double> y = addRowBroadcast(sub(add(a, b), scale(mul(a, b), 0.5)), row);
      return sumAll(mul(y, y));
    };
    CHECK(gradCheckParam(a, loss, sampleIndices(a.numel(), 12)) < 1e-6);
    CHECK(gradCheckParam(b, loss, sampleIndices(b.numel(), 12)) < 1e-6);
    CHECK(gradCheckParam(row, loss, sampleIndices(row.numel(), 3)) < 1e-6);
  }

  SUBCASE("transpose, slices, concats") {
    Tensor<double> a = randomParam({4, 6}, rng);
    Tensor<double> b = randomParam({4, 2}, rng);
    Tensor<double> v = randomParam({6}, rng);
    auto loss = [&] {
      Tensor<double> y = concatLastDim<double>({sliceCols(a, 1, 3), b});  // [4,5]
      Tensor<double> z = concatRows<double>({y, scale(y, 2.0)});          // [8,5]
      Tensor<double> t = matmul(transposeLastTwo(z), z);                  // [5,5]
      Tensor<double> sv = sliceVector(v, 1, 5);
      return sumAll(mul(addRowBroadcast(t, sv), t));
    };
    CHECK(gradCheckParam(a, loss, sampleIndices(a.numel(), 12)) < 1e-6);
    CHECK(gradCheckParam(b, loss, sampleIndices(b.numel(), 8)) < 1e-6);
    CHECK(gradCheckParam(v, loss, sampleIndices(v.numel(), 6)) < 1e-6);
  }

  SUBCASE("relu and layerNorm") {
    Tensor<double> x = randomParam({5, 8}, rng);
    Tensor<double> gain = randomParam({8}, rng, 0.5);
    Tensor<double> bias = randomParam({8}, rng, 0.5);
    auto loss = [&] {
      Tensor<double> y = layerNorm(relu(x), gain, bias);
      return sumAll(mul(y, y));
    };
    CHECK(gradCheckParam(x, loss, sampleIndices(x.numel(), 16), 1e-6) < 1e-4);
    CHECK(gradCheckParam(gain, loss, sampleIndices(gain.numel(), 8)) < 1e-4);
    CHECK(gradCheckParam(bias, loss, sampleIndices(bias.numel(), 8)) < 1e-4);
  }

  SUBCASE("maskedSoftmax") {
    Tensor<double> scores = randomParam({4, 6}, rng);
    // Causal-style mask with two memory columns.
    std::vector<double> mask_values(4 * 6, 0.0);
    for (int i = 0; i < 4; ++i) {
      for (int j = 2 + i + 1; j < 6; ++j) mask_values[i * 6 + j] = -1e9;
    }
    Tensor<double> mask = Tensor<double>::fromVector({4, 6}, std::move(mask_values));
    Tensor<double> weights = Tensor<double>::fromVector(
        {4, 6}, {1, 2, 3, 4, 5, 6, 6, 5, 4, 3, 2, 1, 1, 1, 2, 2, 3, 3, 2, 4, 6, 1, 3, 5});
    auto loss = [&] { return sumAll(mul(maskedSoftmax(scores, mask), weights)); };
    CHECK(gradCheckParam(scores, loss, sampleIndices(scores.numel(), 16)) < 1e-6);
  }

  SUBCASE("embeddingGather and crossEntropy") {
    Tensor<double> table = randomParam({10, 4}, rng);
    Tensor<double> proj = randomParam({4, 7}, rng);
    const std::vector<int32_t> ids{1, 3, 3, 7, 0};
    const std::vector<int32_t> targets{2, 6, 0, 1, 4};
    const std::vector<uint8_t> keep{1, 1, 0, 1, 1};
    auto loss = [&] {
      Tensor<double> logits = matmul(embeddingGather(table, ids), proj);
      return crossEntropy(logits, targets, &keep);
    };
    CHECK(gradCheckParam(table, loss, sampleIndices(table.numel(), 20)) < 1e-6);
    CHECK(gradCheckParam(proj, loss, sampleIndices(proj.numel(), 14)) < 1e-6);
  }

  SUBCASE("relPositionGather") {
    Tensor<double> b = randomParam({3, 5}, rng);  // q_len 3, mem 2 -> k_len 5
    Tensor<double> mix = Tensor<double>::randn({3, 5}, rng, 1.0);
    auto loss = [&] { return sumAll(mul(relPositionGather(b, 2), mix)); };
    CHECK(gradCheckParam(b, loss, sampleIndices(b.numel(), 15)) < 1e-6);
  }
}

TEST_CASE("tensor reused in two branches accumulates its gradient once") {
  Tensor<double> x = Tensor<double>::fromVector({2, 2}, {1, 2, 3, 4});
  x.setRequiresGrad(true);
  // y = x*x + 3x  ->  dy/dx = 2x + 3
  Tensor<double> y = add(mul(x, x), scale(x, 3.0));
  backward(sumAll(y));
  for (int i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.value()[i] + 3.0));
  }
}

TEST_CASE("masked softmax values") {
  SUBCASE("uniform scores over four keys give 0.25 each") {
    Tensor<double> scores = Tensor<double>::full({1, 4}, 1.7);
    Tensor<double> mask = Tensor<double>::zeros({1, 4});
    Tensor<double> out = maskedSoftmax(scores, mask);
    for (int i = 0; i < 4; ++i) CHECK(out.value()[i] == doctest::Approx(0.25));
  }
  SUBCASE("a row attending a single position puts weight 1 there") {
    Tensor<double> scores = Tensor<double>::fromVector({1, 3}, {0.3, -2.0, 5.0});
    Tensor<double> mask = Tensor<double>::fromVector({1, 3}, {0.0, -1e9, -1e9});
    Tensor<double> out = maskedSoftmax(scores, mask);
    CHECK(out.value()[0] == doctest::Approx(1.0));
    CHECK(out.value()[1] == 0.0);
    CHECK(out.value()[2] == 0.0);
  }
  SUBCASE("fully masked row is all zero") {
    Tensor<double> scores = Tensor<double>::fromVector({1, 2}, {1.0, 2.0});
    Tensor<double> mask = Tensor<double>::full({1, 2}, -1e9);
    Tensor<double> out = maskedSoftmax(scores, mask);
    CHECK(out.value()[0] == 0.0);
    CHECK(out.value()[1] == 0.0);
  }
  SUBCASE("random scores match a direct exp/sum reference") {
    Rng rng(3);
    Tensor<double> scores = Tensor<double>::randn({5, 7}, rng, 2.0);
    Tensor<double> mask = Tensor<double>::zeros({5, 7});
    Tensor<double> out = maskedSoftmax(scores, mask);
    for (int r = 0; r < 5; ++r) {
      double denom = 0.0;
      for (int c = 0; c < 7; ++c) denom += std::exp(scores.value()[r * 7 + c]);
      for (int c = 0; c < 7; ++c) {
        CHECK(out.value()[r * 7 + c] ==
              doctest::Approx(std::exp(scores.value()[r * 7 + c]) / denom).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("layer norm") {
  SUBCASE("constant rows normalize to the bias") {
    Tensor<double> x = Tensor<double>::full({2, 6}, 3.25);
    Tensor<double> gain = Tensor<double>::full({6}, 1.0);
    Tensor<double> bias = Tensor<double>::fromVector({6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    Tensor<double> out = layerNorm(x, gain, bias);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 6; ++c) {
        CHECK(out.value()[r * 6 + c] == doctest::Approx(bias.value()[c]).epsilon(1e-9));
      }
    }
  }
  SUBCASE("per-row output mean equals the bias mean") {
    Rng rng(11);
    Tensor<double> x = Tensor<double>::randn({4, 16}, rng, 3.0);
    Tensor<double> gain = Tensor<double>::full({16}, 1.0);
    Tensor<double> bias = Tensor<double>::full({16}, 0.75);
    Tensor<double> out = layerNorm(x, gain, bias);
    for (int r = 0; r < 4; ++r) {
      double mean = 0.0;
      for (int c = 0; c < 16; ++c) mean += out.value()[r * 16 + c];
      mean /= 16;
      CHECK(mean == doctest::Approx(0.75).epsilon(1e-6));
    }
  }
}

TEST_CASE("cross entropy") {
  SUBCASE("uniform logits over vocab 128 give ln(128)") {
    Tensor<double> logits = Tensor<double>::zeros({3, 128});
    Tensor<double> loss = crossEntropy(logits, {5, 90, 127});
    CHECK(loss.item() == doctest::Approx(std::log(128.0)).epsilon(1e-9));
  }
  SUBCASE("huge-margin correct logits drive the loss to zero") {
    std::vector<double> values(2 * 8, 0.0);
    values[3] = 50.0;
    values[8 + 6] = 50.0;
    Tensor<double> logits = Tensor<double>::fromVector({2, 8}, std::move(values));
    Tensor<double> loss = crossEntropy(logits, {3, 6});
    CHECK(loss.item() < 1e-9);
  }
  SUBCASE("padding positions are excluded from the mean") {
    Tensor<double> logits = Tensor<double>::zeros({2, 4});
    const std::vector<uint8_t> keep{1, 0};
    Tensor<double> loss = crossEntropy(logits, {0, 2}, &keep);
    CHECK(loss.item() == doctest::Approx(std::log(4.0)));
  }
  SUBCASE("out-of-vocabulary target throws") {
    Tensor<double> logits = Tensor<double>::zeros({1, 4});
    CHECK_THROWS_AS(crossEntropy(logits, {4}), DataError);
  }
  SUBCASE("random case matches a 64-bit reference") {
    Rng rng(5);
    Tensor<double> logits = Tensor<double>::randn({6, 9}, rng, 2.0);
    const std::vector<int32_t> targets{0, 3, 8, 2, 2, 7};
    double expected = 0.0;
    for (int t = 0; t < 6; ++t) {
      double denom = 0.0;
      for (int v = 0; v < 9; ++v) denom += std::exp(logits.value()[t * 9 + v]);
      expected += std::log(denom) - logits.value()[t * 9 + targets[static_cast<size_t>(t)]];
    }
    expected /= 6.0;
    CHECK(crossEntropy(logits, targets).item() == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("dropout") {
  Rng rng(17);
  Tensor<double> x = Tensor<double>::full({50, 20}, 1.0);
  SUBCASE("evaluation mode is the identity") {
    Tensor<double> out = dropout(x, 0.4, &rng, /*train=*/false);
    CHECK(out.node().get() == x.node().get());
  }
  SUBCASE("train mode preserves the expectation via 1/(1-p) scaling") {
    Tensor<double> out = dropout(x, 0.4, &rng, /*train=*/true);
    double mean = 0.0;
    int zeros = 0;
    for (double v : out.value()) {
      mean += v;
      if (v == 0.0) {
        ++zeros;
      } else {
        CHECK(v == doctest::Approx(1.0 / 0.6));
      }
    }
    mean /= static_cast<double>(out.numel());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.08));
    CHECK(zeros > 250);  // roughly 40% of 1000
    CHECK(zeros < 550);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor<float> p = Tensor<float>::fromVector({3}, {1.f, -2.f, 0.5f});
    p.setRequiresGrad(true);
    p.zeroGrad();
    AdamOptimizer<float> opt({p});
    opt.step(1e-2);
    CHECK(p.value()[0] == 1.f);
    CHECK(p.value()[1] == -2.f);
    CHECK(p.value()[2] == 0.5f);
  }
  SUBCASE("first step moves by about -lr * sign(gradient)") {
    Tensor<double> p = Tensor<double>::fromVector({2}, {1.0, 1.0});
    p.setRequiresGrad(true);
    p.zeroGrad();
    p.grad()[0] = 0.37;
    p.grad()[1] = -22.0;
    AdamOptimizer<double> opt({p});
    opt.step(1e-3);
    CHECK(p.value()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-4));
    CHECK(p.value()[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-4));
  }
  SUBCASE("descends a quadratic bowl monotonically after warm-up") {
    Tensor<double> p = Tensor<double>::fromVector({1}, {5.0});
    p.setRequiresGrad(true);
    AdamOptimizer<double> opt({p});
    double previous = 25.0;
    for (int step = 1; step <= 100; ++step) {
      p.zeroGrad();
      p.grad()[0] = 2.0 * p.value()[0];  // d/dp of p^2
      opt.step(0.05);
      const double loss = p.value()[0] * p.value()[0];
      if (step > 5) CHECK(loss <= previous + 1e-12);
      previous = loss;
    }
    CHECK(previous < 25.0 * 0.1);
  }
}

TEST_CASE("gradient clipping scales to the requested global norm") {
  Tensor<double> a = Tensor<double>::fromVector({2}, {0.0, 0.0});
  Tensor<double> b = Tensor<double>::fromVector({1}, {0.0});
  a.setRequiresGrad(true);
  b.setRequiresGrad(true);
  a.grad()[0] = 3.0;
  a.grad()[1] = 0.0;
  b.grad()[0] = 4.0;
  std::vector<Tensor<double>> params{a, b};
  const double norm = clipGlobalNorm(params, 0.25);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(3.0 * 0.25 / 5.0));
  CHECK(b.grad()[0] == doctest::Approx(4.0 * 0.25 / 5.0));
}

TEST_CASE("determinism: same seed reproduces bit-identical tensors") {
  Rng rng1(123), rng2(123);
  Tensor<float> a = Tensor<float>::randn({16, 16}, rng1, 0.02);
  Tensor<float> b = Tensor<float>::randn({16, 16}, rng2, 0.02);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
  quartet::test::TempDir dir("ckpt");
  Rng rng(9);
  Tensor<float> f = Tensor<float>::randn({3, 5}, rng, 1.0);
  Tensor<double> d = Tensor<double>::randn({7}, rng, 1.0);
  TensorContainer container;
  container.metadata = "{\"note\":\"round trip\"}";
  container.addTensor("weights/f", f);
  container.addTensor("weights/d", d);
  container.save(dir / "test.qtc");

  TensorContainer loaded = TensorContainer::load(dir / "test.qtc");
  CHECK(loaded.metadata == container.metadata);
  Tensor<float> f2 = Tensor<float>::zeros({3, 5});
  Tensor<double> d2 = Tensor<double>::zeros({7});
  loaded.loadInto("weights/f", f2);
  loaded.loadInto("weights/d", d2);
  for (int64_t i = 0; i < f.numel(); ++i) CHECK(f.value()[i] == f2.value()[i]);
  for (int64_t i = 0; i < d.numel(); ++i) CHECK(d.value()[i] == d2.value()[i]);

  CHECK_THROWS_AS(loaded.require("missing"), DataError);
  Tensor<float> wrong_shape = Tensor<float>::zeros({5, 3});
  CHECK_THROWS_AS(loaded.loadInto("weights/f", wrong_shape), DataError);
}
