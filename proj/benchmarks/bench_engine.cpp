#include <benchmark/benchmark.h>

#include "qfp/engine.hpp"
#include "qfp/netlist.hpp"

namespace {

// Chain of damped junction stages fed by a sine: exercises assembly,
// Newton iteration, and the sparse solve on a mid-sized system.
std::string chain_netlist(int stages) {
  std::string t =
      "* junction chain\n"
      ".model jstd jj(Ic=50u C=0.15p Rsg=100 Rn=1.6 Vg=2.8m)\n"
      "v1 in 0 sin(0 1m 5g 0 2)\n"
      "r1 in s0 50\n";
  for (int i = 0; i < stages; ++i) {
    std::string a = "s" + std::to_string(i);
    std::string b = "s" + std::to_string(i + 1);
    t += "l" + std::to_string(i) + " " + a + " " + b + " 2p\n";
    t += "b" + std::to_string(i) + " " + b + " 0 jstd\n";
  }
  t += "rload s" + std::to_string(stages) + " 0 10\n.end\n";
  return t;
}

void BM_transient_step(benchmark::State& state) {
  auto n = qfp::flatten(qfp::parse_netlist(chain_netlist(static_cast<int>(state.range(0)))));
  qfp::SimConfig cfg;
  cfg.dt = 1e-13;
  qfp::Simulator sim(n, cfg);
  for (auto _ : state) {
    sim.step();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_transient_step)->Arg(4)->Arg(16)->Arg(64);

void BM_parse_serialize(benchmark::State& state) {
  std::string text = chain_netlist(32);
  for (auto _ : state) {
    auto n = qfp::parse_netlist(text);
    benchmark::DoNotOptimize(qfp::serialize(n));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_parse_serialize);

}  // namespace

BENCHMARK_MAIN();
