#include <benchmark/benchmark.h>

#include "nedspec/spectrum.hpp"

using namespace ned;

namespace {

const LinearSystem& example1() {
  static CatalogSystem cat = builtin_example("example1", {{"lambda0", -2.0}, {"a", -1.0}});
  return cat.system;
}

void bm_matrix_eval(benchmark::State& state) {
  const LinearSystem& sys = example1();
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sys.eval(t));
    t = t < 199.0 ? t + 0.37 : 0.0;
  }
}
BENCHMARK(bm_matrix_eval);

void bm_transition_query(benchmark::State& state) {
  const LinearSystem& sys = example1();
  static TransitionOperator op(sys);
  double t = 11.0, s = 170.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(op.log_norm_transition(t, s));
    std::swap(t, s);
  }
}
BENCHMARK(bm_transition_query);

void bm_scalar_cumulative(benchmark::State& state) {
  static ScalarFlow q(example1());
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(q.cumulative(t));
    t = t < 199.0 ? t + 0.61 : 0.17;
  }
}
BENCHMARK(bm_scalar_cumulative);

void bm_pair_oracle(benchmark::State& state) {
  static ScalarFlow q(example1());
  static ScalarPairOracle oracle(q, 12.0);
  double u = -1.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle.max_forward(u, u + 2.0));
    u = u < 1.0 ? u + 0.01 : -1.0;
  }
}
BENCHMARK(bm_pair_oracle);

void bm_dichotomy_verdict(benchmark::State& state) {
  static DichotomyTester tester(example1());
  double lam = -6.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tester.test(lam));
    lam = lam < 6.0 ? lam + 0.25 : -6.0;
  }
}
BENCHMARK(bm_dichotomy_verdict);

void bm_spectrum_sweep(benchmark::State& state) {
  static DichotomyTester tester(example1());
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_spectrum(tester));
  }
}
BENCHMARK(bm_spectrum_sweep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
