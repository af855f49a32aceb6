// Serial reference vs OpenMP kernels.
#include <benchmark/benchmark.h>

#include "revis/kernels.hpp"
#include "revis/rng.hpp"
#include "revis/toymodel.hpp"

namespace {

using namespace revis;

HiddenStateDump make_dump(std::size_t n, std::size_t dim) {
  DumpMetadata m{kHsdVersion, "bench", 4, dim, n, {kAllConditions.begin(), kAllConditions.end()}};
  auto dump = HiddenStateDump::zeros(std::move(m));
  SplitMix64 rng(1);
  for (auto& x : dump.states) x = static_cast<float>(rng.normal());
  return dump;
}

template <auto Fn>
void BM_MeanDifference(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto dump = make_dump(256, dim);
  Vector out(dim);
  for (auto _ : state) {
    Fn(dump, 0, 2, 3, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 256 * static_cast<std::int64_t>(dim));
}

template <auto Fn>
void BM_RiskScores(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Matrix m(rows, 1024);
  SplitMix64 rng(2);
  for (auto& x : m.data) x = rng.normal();
  Vector v(1024);
  for (auto& x : v) x = rng.normal();
  const double vn = kernels::norm(v);
  Vector out(rows);
  for (auto _ : state) {
    Fn(m, v, vn, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void BM_Matvec(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<float> w(n * n);
  SplitMix64 rng(3);
  for (auto& x : w) x = static_cast<float>(rng.normal());
  Vector x(n), y(n);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) {
    Fn(w, n, n, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_ToyModelToken(benchmark::State& state) {
  ToyModelSpec spec;
  spec.hidden_dim = static_cast<std::size_t>(state.range(0));
  spec.max_seq = 64;
  const auto model = build_model(spec);
  for (auto _ : state) {
    ToyModel::Session s(model);
    for (Token t = 1; t < 33; ++t) benchmark::DoNotOptimize(s.push(t % spec.vocab_size));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}

BENCHMARK(BM_MeanDifference<kernels::serial::mean_difference>)->Name("mean_difference/serial")->Arg(512)->Arg(4096);
BENCHMARK(BM_MeanDifference<kernels::omp::mean_difference>)->Name("mean_difference/omp")->Arg(512)->Arg(4096);
BENCHMARK(BM_RiskScores<kernels::serial::risk_scores>)->Name("risk_scores/serial")->Arg(64)->Arg(1024);
BENCHMARK(BM_RiskScores<kernels::omp::risk_scores>)->Name("risk_scores/omp")->Arg(64)->Arg(1024);
BENCHMARK(BM_Matvec<kernels::serial::matvec>)->Name("matvec/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Matvec<kernels::omp::matvec>)->Name("matvec/omp")->Arg(64)->Arg(512);
BENCHMARK(BM_ToyModelToken)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
