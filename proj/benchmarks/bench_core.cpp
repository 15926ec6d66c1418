#include <benchmark/benchmark.h>

#include <vector>

#include "ccl/conformal.hpp"
#include "ccl/credal_loss.hpp"
#include "ccl/prob.hpp"
#include "ccl/rng.hpp"

namespace {

using namespace ccl;

PossDist random_possibility(std::size_t k, Rng& rng) {
  std::vector<double> degrees(k);
  double maxd = 0.0;
  for (auto& d : degrees) {
    d = rng.uniform01();
    maxd = std::max(maxd, d);
  }
  for (auto& d : degrees) d /= maxd;
  return PossDist(std::move(degrees));
}

ProbDist random_simplex_point(std::size_t k, Rng& rng) {
  std::vector<double> mass(k);
  for (auto& m : mass) m = -std::log(std::max(rng.uniform01(), 1e-300));
  return ProbDist::normalized(std::move(mass));
}

void BM_CredalProjection(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(12);
  std::vector<std::pair<PossDist, ProbDist>> instances;
  for (int i = 0; i < 64; ++i) {
    instances.emplace_back(random_possibility(k, rng), random_simplex_point(k, rng));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [pi, p_hat] = instances[i++ & 63];
    benchmark::DoNotOptimize(credal_projection(pi, p_hat));
  }
}
BENCHMARK(BM_CredalProjection)->Arg(4)->Arg(10)->Arg(100)->Arg(1000);

void BM_MembershipFastPath(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(13);
  const auto pi = random_possibility(k, rng);
  const CredalSet set(pi);
  const auto order = set.sorted_order();
  const auto bounds = set.cumulative_bounds();
  std::vector<double> w(k, 0.0);
  double prev = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    w[order[i]] = (bounds[i] - prev) * (1.0 - 1e-9);
    prev = bounds[i];
  }
  double total = 0.0;
  for (double v : w) total += v;
  w[order[k - 1]] += 1.0 - total;
  const ProbDist inside = ProbDist::normalized(std::move(w));
  for (auto _ : state) {
    benchmark::DoNotOptimize(credal_projection(pi, inside));
  }
}
BENCHMARK(BM_MembershipFastPath)->Arg(100)->Arg(1000)->Arg(10000);

void BM_OracleProjection(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(14);
  std::vector<std::pair<PossDist, ProbDist>> instances;
  for (int i = 0; i < 16; ++i) {
    instances.emplace_back(random_possibility(k, rng), random_simplex_point(k, rng));
  }
  OracleConfig cfg;
  cfg.tolerance = 1e-6;
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [pi, p_hat] = instances[i++ & 15];
    benchmark::DoNotOptimize(oracle_projection(pi, p_hat, cfg));
  }
}
BENCHMARK(BM_OracleProjection)->Arg(4)->Arg(8);

void BM_PValues(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  Rng rng(15);
  std::vector<ProbDist> preds;
  std::vector<ClassIndex> labels;
  for (std::size_t i = 0; i < L; ++i) {
    preds.push_back(random_simplex_point(10, rng));
    labels.push_back(rng.uniform_int(10));
  }
  const auto cal = ConformalCalibrator::calibrate(preds, labels, NonConformityMeasure{});
  const auto query = random_simplex_point(10, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cal.p_values(query));
  }
}
BENCHMARK(BM_PValues)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
