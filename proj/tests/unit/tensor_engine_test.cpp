#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "snl/grad_check.hpp"
#include "snl/network.hpp"
#include "snl/ops.hpp"
#include "snl/tape.hpp"
#include "test_util.hpp"

namespace snl {
namespace {

using testing::random_away_from_zero;
using testing::random_tensor;

TEST(Tensor, ShapeMustMatchBuffer) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_THROW(t.reshape({4, 2}), ShapeError);
  t.reshape({3, 2});
  EXPECT_EQ(t.dim(0), 3u);
}

TEST(Tensor, NonFiniteIsAnError) {
  Tensor t({2}, std::vector<double>{1.0, std::nan("")});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(t.check_finite("t"), NumericError);
}

TEST(Affine, IdentityWeight) {
  Tape tape;
  Var y = affine(tape.constant(Tensor({1, 2}, {1, 2})), tape.constant(Tensor({2, 2}, {1, 0, 0, 1})),
                 tape.constant(Tensor({2}, {0, 0})));
  EXPECT_EQ(y.value()[0], 1.0);
  EXPECT_EQ(y.value()[1], 2.0);
}

TEST(Affine, ForcedByDefinition) {
  Tape tape;
  Var y = affine(tape.constant(Tensor({1, 2}, {1, 0})), tape.constant(Tensor({2, 2}, {2, 3, 4, 5})),
                 tape.constant(Tensor({2}, {1, 1})));
  EXPECT_EQ(y.value()[0], 3.0);
  EXPECT_EQ(y.value()[1], 4.0);
}

TEST(Affine, ShapeMismatchNamesDimensions) {
  Tape tape;
  try {
    affine(tape.constant(Tensor({1, 3})), tape.constant(Tensor({2, 2})), tape.constant(Tensor({2})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[1x3]"), std::string::npos);
  }
}

TEST(Affine, GradientOfSumMatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  ScalarComputation f = [](Tape&, std::span<const Var> p) { return sum(affine(p[0], p[1], p[2])); };
  for (int probe = 0; probe < 100; ++probe) {
    auto r = grad_check(f, {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng),
                            random_tensor({5}, rng)});
    ASSERT_LT(r.max_rel_error, 1e-6) << "probe " << probe;
  }
}

TEST(Conv2d, SumOfOnes) {
  Tape tape;
  Var y = conv2d(tape.constant(Tensor({1, 1, 3, 3}, 1.0)), tape.constant(Tensor({1, 1, 2, 2}, 1.0)),
                 {1, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.value().values()) EXPECT_EQ(v, 4.0);
}

TEST(Conv2d, IdentityKernelReproducesInput) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({2, 1, 5, 4}, rng);
  Tape tape;
  Var y = conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 1, 1}, 1.0)), {1, 0});
  EXPECT_TRUE(bit_equal(y.value(), x));
}

TEST(Conv2d, OutputSizeFormula) {
  EXPECT_EQ(conv2d_output_shape({2, 3, 8, 8}, {5, 3, 3, 3}, {1, 1}), (Shape{2, 5, 8, 8}));
  EXPECT_EQ(conv2d_output_shape({1, 1, 9, 7}, {1, 1, 3, 3}, {2, 1}), (Shape{1, 1, 5, 4}));
  EXPECT_THROW(conv2d_output_shape({1, 1, 8, 8}, {1, 1, 3, 3}, {2, 1}), ShapeError);
  EXPECT_THROW(conv2d_output_shape({1, 1, 2, 2}, {1, 1, 3, 3}, {1, 0}), ShapeError);
  EXPECT_THROW(conv2d_output_shape({1, 2, 4, 4}, {1, 3, 3, 3}, {1, 0}), ShapeError);
}

TEST(Conv2d, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(5);
  for (Conv2dGeometry g : {Conv2dGeometry{1, 0}, Conv2dGeometry{1, 1}, Conv2dGeometry{2, 1}}) {
    ScalarComputation f = [g](Tape&, std::span<const Var> p) {
      return sum(conv2d(p[0], p[1], p[2], g));
    };
    for (int probe = 0; probe < 100; ++probe) {
      auto r = grad_check(f, {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                              random_tensor({3}, rng)});
      ASSERT_LT(r.max_rel_error, 1e-6) << "stride " << g.stride << " pad " << g.padding;
    }
  }
}

TEST(CrossEntropy, UniformLogits) {
  Tape tape;
  std::vector<int> labels{0};
  Var l = softmax_cross_entropy(tape.constant(Tensor({1, 2}, {0, 0})), labels);
  EXPECT_NEAR(l.value().item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, SaturatedLogits) {
  // -log sigmoid(20) = log1p(exp(-20))
  const double oracle = std::log1p(std::exp(-20.0));
  Tape tape;
  std::vector<int> labels{0};
  Var l = softmax_cross_entropy(tape.constant(Tensor({1, 2}, {10, -10})), labels);
  EXPECT_NEAR(l.value().item(), oracle, 1e-22);
  EXPECT_NEAR(l.value().item(), 2.0611536203143808e-09, 1e-22);
}

TEST(CrossEntropy, OutOfRangeLabel) {
  Tape tape;
  std::vector<int> labels{2};
  EXPECT_THROW(softmax_cross_entropy(tape.constant(Tensor({1, 2})), labels), std::out_of_range);
  labels = {-1};
  EXPECT_THROW(softmax_cross_entropy(tape.constant(Tensor({1, 2})), labels), std::out_of_range);
}

TEST(CrossEntropy, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  std::vector<int> labels{0, 2, 1, 2};
  ScalarComputation f = [&labels](Tape&, std::span<const Var> p) {
    return softmax_cross_entropy(p[0], labels);
  };
  for (int probe = 0; probe < 100; ++probe) {
    auto r = grad_check(f, {random_tensor({4, 3}, rng, 3.0)});
    ASSERT_LT(r.max_rel_error, 1e-5);
  }
}

TEST(KlSoftTargets, IdenticalDistributionsGiveZero) {
  Tensor logits({2, 3}, {0.3, -1.0, 2.0, 5.0, 0.0, 0.1});
  Tape tape;
  EXPECT_NEAR(kl_soft_targets(tape.constant(logits), logits, 4.0).value().item(), 0.0, 1e-15);
}

TEST(KlSoftTargets, TwoClassExample) {
  // Independent evaluation: p = softmax([1,0]), q = softmax([0,1]).
  const double p1 = std::exp(1.0) / (std::exp(1.0) + 1.0), p2 = 1.0 - p1;
  const double oracle = p1 * std::log(p1 / p2) + p2 * std::log(p2 / p1);
  EXPECT_NEAR(oracle, 0.46211715726000974, 1e-15);
  Tape tape;
  Var kl = kl_soft_targets(tape.constant(Tensor({1, 2}, {0, 1})), Tensor({1, 2}, {1, 0}), 1.0);
  EXPECT_NEAR(kl.value().item(), oracle, 1e-14);
}

TEST(KlSoftTargets, NonNegativeAcrossTemperatures) {
  Tensor s({1, 3}, {0.2, 1.5, -0.7});
  Tensor t({1, 3}, {2.0, -1.0, 0.4});
  double prev = -1.0;
  for (double temp = 0.5; temp <= 16.0; temp *= 2.0) {
    Tape tape;
    const double v = kl_soft_targets(tape.constant(s), t, temp).value().item();
    EXPECT_GE(v, 0.0);
    if (prev >= 0.0) EXPECT_LT(std::abs(v - prev), 10.0);
    prev = v;
  }
}

TEST(KlSoftTargets, RejectsNonPositiveTemperature) {
  Tape tape;
  Tensor t({1, 2});
  EXPECT_THROW(kl_soft_targets(tape.constant(t), t, 0.0), std::invalid_argument);
  EXPECT_THROW(kl_soft_targets(tape.constant(t), t, -1.0), std::invalid_argument);
}

TEST(KlSoftTargets, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  for (int probe = 0; probe < 100; ++probe) {
    Tensor teacher = random_tensor({3, 4}, rng, 3.0);
    ScalarComputation f = [&teacher](Tape&, std::span<const Var> p) {
      return kl_soft_targets(p[0], teacher, 4.0);
    };
    auto r = grad_check(f, {random_tensor({3, 4}, rng, 3.0)});
    ASSERT_LT(r.max_rel_error, 1e-5);
  }
}

TEST(GatedActivation, GradientWrtZAndGateAwayFromKinks) {
  std::mt19937_64 rng(17);
  for (GateMode mode : {GateMode::identity, GateMode::zero_out}) {
    for (GateGranularity gran : {GateGranularity::per_unit, GateGranularity::per_channel}) {
      ScalarComputation f = [mode, gran](Tape&, std::span<const Var> p) {
        return sum(gated_activation(p[0], p[1], gran, mode));
      };
      const Shape z_shape{2, 3, 2, 2};
      const std::size_t gates = gate_count({3, 2, 2}, gran);
      for (int probe = 0; probe < 100; ++probe) {
        auto r = grad_check(f, {random_away_from_zero(z_shape, rng),
                                testing::uniform_tensor({gates}, rng, -0.5, 1.5)});
        ASSERT_LT(r.max_rel_error, 1e-6) << to_string(mode) << " " << to_string(gran);
      }
    }
  }
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  ScalarComputation f = [](Tape& tape, std::span<const Var>) {
    return tape.constant(Tensor::scalar(3.0));
  };
  auto r = grad_check(f, {Tensor({3}, 1.0)});
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.checked, 3u);
}

TEST(GradCheck, DetectsProbeOnKink) {
  ScalarComputation f = [](Tape&, std::span<const Var> p) { return sum(relu(p[0])); };
  EXPECT_THROW(grad_check(f, {Tensor({1}, std::vector<double>{0.0})}), KinkDetected);
  std::mt19937_64 rng(1);
  int calls = 0;
  auto r = grad_check_sampled(
      f,
      [&calls](std::mt19937_64&) {
        return std::vector<Tensor>{Tensor({1}, std::vector<double>{calls++ == 0 ? 0.0 : 0.5})};
      },
      rng);
  EXPECT_EQ(calls, 2);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(Tape, BackwardVisitsInExactReverseOrder) {
  Tape tape;
  Var a = tape.parameter(Tensor({1, 2}, {0.5, -1.0}));
  Var w = tape.parameter(Tensor({2, 2}, {1, 2, 3, 4}));
  Var b = tape.parameter(Tensor({2}, {0.1, 0.2}));
  Var z = affine(a, w, b);
  Var r = relu(z);
  Var s = sum(r);
  tape.backward(s);
  EXPECT_EQ(tape.last_backward_order(), (std::vector<std::size_t>{s.id, r.id, z.id}));
  // every trainable leaf got a gradient buffer of identical shape
  for (Var v : {a, w, b}) EXPECT_EQ(v.grad().shape(), v.value().shape());
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape tape;
  Var a = tape.parameter(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(a), ShapeError);
}

TEST(Determinism, SameSeedGivesBitIdenticalForward) {
  const ArchSpec arch = ArchSpec::cnn({1, 6, 6}, {3, 4}, 3);
  std::mt19937_64 rng(99);
  Tensor x = random_tensor({4, 1, 6, 6}, rng);
  const Tensor a = GatedNetwork::build(arch, 42).predict(x);
  const Tensor b = GatedNetwork::build(arch, 42).predict(x);
  EXPECT_TRUE(bit_equal(a, b));
  const Tensor c = GatedNetwork::build(arch, 43).predict(x);
  EXPECT_FALSE(bit_equal(a, c));
}

// Random chains of conforming primitives never break the shape/buffer invariant.
TEST(ShapeAlgebra, FuzzedCompositionsKeepBufferConsistent) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> op_dist(0, 5);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    Tape tape;
    const std::size_t batch = small(rng);
    Var cur = tape.constant(random_tensor({batch, small(rng), small(rng) + 2, small(rng) + 2}, rng));
    for (int step = 0; step < 4; ++step) {
      const Shape s = cur.shape();
      switch (op_dist(rng)) {
        case 0:
          if (s.size() == 4) {
            Tensor k = random_tensor({small(rng), s[1], s[2] > 2 ? 2u : 1u, 1}, rng);
            const std::size_t pad = k.dim(2) / 2;
            try {
              cur = conv2d(cur, tape.constant(k), {1, pad});
            } catch (const ShapeError&) {
            }
          }
          break;
        case 1: cur = relu(cur); break;
        case 2: {
          const Shape fs(s.begin() + 1, s.end());
          const auto gran = s.size() > 2 && (rng() & 1) ? GateGranularity::per_channel
                                                         : GateGranularity::per_unit;
          cur = gated_activation(cur, tape.constant(random_tensor({gate_count(fs, gran)}, rng)),
                                 gran, GateMode::identity);
          break;
        }
        case 3: cur = flatten(cur); break;
        case 4:
          if (s.size() == 2) {
            const std::size_t out = small(rng);
            cur = affine(cur, tape.constant(random_tensor({s[1], out}, rng)),
                         tape.constant(random_tensor({out}, rng)));
          }
          break;
        case 5: cur = add(cur, cur); break;
      }
    }
    for (std::size_t i = 0; i < tape.size(); ++i) {
      ASSERT_EQ(shape_numel(tape.value(i).shape()), tape.value(i).numel());
    }
  }
}

}  // namespace
}  // namespace snl
