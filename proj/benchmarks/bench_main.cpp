#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "homedqn/agent.hpp"
#include "homedqn/harness.hpp"

using namespace homedqn;

namespace {

const World& world(const char* profile) {
  static const World desk = World::load("desk", HOMEDQN_SOURCE_DATA_DIR);
  static const World full = World::load("full", HOMEDQN_SOURCE_DATA_DIR);
  return std::string_view(profile) == "desk" ? desk : full;
}

NetworkSpec spec_for(int profile) { return profile == 0 ? NetworkSpec::desk() : NetworkSpec::full(); }

std::vector<float> random_input(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return v;
}

void BM_Forward(benchmark::State& state) {
  Network<float> net(spec_for(static_cast<int>(state.range(0))));
  net.init_glorot(1);
  const int batch = static_cast<int>(state.range(1));
  const auto in = random_input(net.input_size() * static_cast<std::size_t>(batch), 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(in, batch).data());
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Args({0, 1})->Args({0, 32})->Args({1, 1})->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
  Network<float> net(spec_for(static_cast<int>(state.range(0))));
  net.init_glorot(1);
  const int batch = static_cast<int>(state.range(1));
  const auto in = random_input(net.input_size() * static_cast<std::size_t>(batch), 2);
  const auto d_out = random_input(net.output_size() * static_cast<std::size_t>(batch), 3);
  auto grads = net.make_gradients();
  for (auto _ : state) {
    net.forward(in, batch);
    grads.zero();
    net.backward(d_out, grads);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ForwardBackward)->Args({0, 32})->Args({1, 1})->Unit(benchmark::kMillisecond);

void BM_Learn(benchmark::State& state) {
  AgentConfig cfg;
  cfg.minibatch_size = static_cast<int>(state.range(0));
  DqnAgent agent(NetworkSpec::desk(), cfg, 1);
  Rng rng(4);
  for (int i = 0; i < 256; ++i) {
    auto s = std::make_shared<StateImage>(64);
    for (auto& p : s->pixels) p = static_cast<std::uint8_t>(rng.below(256));
    agent.integrate({s, static_cast<int>(rng.below(kActionCount)), rng.uniform() < 0.5 ? 1.0 : -1.0, s});
  }
  for (auto _ : state) agent.learn();
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Learn)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Render(benchmark::State& state) {
  const auto& w = world(state.range(0) == 0 ? "desk" : "full");
  PhaseConfig cfg;
  cfg.data_dir = HOMEDQN_SOURCE_DATA_DIR;
  auto env = w.synthetic(cfg)(0);
  const auto st = env->observe().state;
  for (auto _ : state) benchmark::DoNotOptimize(w.renderer.render(st).pixels.data());
}
BENCHMARK(BM_Render)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
