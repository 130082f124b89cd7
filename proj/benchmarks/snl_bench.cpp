#include <benchmark/benchmark.h>

#include <random>

#include "snl/capacity.hpp"
#include "snl/network.hpp"
#include "snl/ops.hpp"

namespace {

using namespace snl;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = n(rng);
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({32, c, 8, 8}, 1);
  const Tensor k = random_tensor({c, c, 3, 3}, 2);
  const Tensor b = random_tensor({c}, 3);
  for (auto _ : state) {
    Tape tape;
    Var y = conv2d(tape.parameter(x), tape.parameter(k), tape.parameter(b), {1, 1});
    tape.backward(sum(y));
    benchmark::DoNotOptimize(tape.value(y.id).data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(4)->Arg(16);

void BM_AffineForwardBackward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({64, d}, 1);
  const Tensor w = random_tensor({d, d}, 2);
  const Tensor b = random_tensor({d}, 3);
  for (auto _ : state) {
    Tape tape;
    Var y = affine(tape.parameter(x), tape.parameter(w), tape.parameter(b));
    tape.backward(sum(y));
    benchmark::DoNotOptimize(tape.value(y.id).data());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_AffineForwardBackward)->Arg(64)->Arg(256);

GatedNetwork toy_cnn(GateGranularity g) {
  return GatedNetwork::build(ArchSpec::cnn({1, 8, 8}, {12, 10, 8, 6, 4, 2}, 2, false, g), 1);
}

void BM_GatedNetworkStep(benchmark::State& state) {
  GatedNetwork net = toy_cnn(static_cast<GateGranularity>(state.range(0)));
  const Tensor x = random_tensor({64, 1, 8, 8}, 4);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
  for (auto _ : state) {
    Tape tape;
    Binding bind;
    Var logits = net.forward(tape, x, &bind);
    tape.backward(softmax_cross_entropy(logits, y));
    net.load_gradients(bind);
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_GatedNetworkStep)
    ->Arg(static_cast<int>(GateGranularity::per_unit))
    ->Arg(static_cast<int>(GateGranularity::per_channel));

void BM_Predict(benchmark::State& state) {
  const GatedNetwork net = toy_cnn(GateGranularity::per_unit);
  const Tensor x = random_tensor({256, 1, 8, 8}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(x).data());
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_Predict);

void BM_ReluCount(benchmark::State& state) {
  GatedNetwork net = toy_cnn(GateGranularity::per_unit);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 0.02);
  for (GateVector& g : net.gates())
    for (std::size_t i = 0; i < g.values.numel(); ++i) g.values[i] = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.relu_count(0.01));
}
BENCHMARK(BM_ReluCount);

void BM_CountPiecesRay(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const GatedNetwork net = random_two_layer_net(4, d, d, d / 2, d / 2, 7);
  const std::vector<double> u{1.0, -0.5, 0.25, 2.0};
  for (auto _ : state) benchmark::DoNotOptimize(count_pieces_ray(net, u, -10.0, 10.0).pieces());
}
BENCHMARK(BM_CountPiecesRay)->Arg(8)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
