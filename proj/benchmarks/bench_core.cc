#include <benchmark/benchmark.h>

#include <random>

#include "iffgp/features.hpp"
#include "iffgp/gp_core.hpp"
#include "iffgp/kernels.hpp"
#include "iffgp/precompute.hpp"

namespace {

using namespace iffgp;

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  FrequencyGrid grid;
  DataSummary summary;
  Kernel kernel;
  SpectralDensity density;

  Problem(Eigen::Index n, int features)
      : kernel(Kernel::se(Eigen::VectorXd::Ones(1), 1.0)),
        density(SpectralDensity::closed_form(kernel)) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::normal_distribution<double> g(0.0, 1.0);
    X.resize(n, 1);
    y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = u(rng);
      y[i] = g(rng);
    }
    grid = build_grid(features, default_epsilon(X), 1,
                      GridMask::full_rectangular);
    summary = compute_summaries(X, y, grid);
  }
};

void BM_CollapsedObjective(benchmark::State& state) {
  const int features = static_cast<int>(state.range(0));
  Problem problem(2000, features);
  const KuuDiag kuu = kuu_diag(problem.grid, problem.density);
  const double t_hat =
      trace_term(problem.kernel, problem.X.rows(), problem.grid,
                 problem.density);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        collapsed_objective(problem.summary, kuu, 1.0, t_hat).total);
  }
}
BENCHMARK(BM_CollapsedObjective)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void BM_ComputeSummaries(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Problem problem(n, 128);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        compute_summaries(problem.X, problem.y, problem.grid).nu2);
  }
}
BENCHMARK(BM_ComputeSummaries)->Arg(1024)->Arg(8192);

void BM_SpectralDensityDft(benchmark::State& state) {
  const Kernel kernel = Kernel::matern32(Eigen::VectorXd::Ones(1), 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(SpectralDensity::dft_numeric(kernel).dim());
  }
}
BENCHMARK(BM_SpectralDensityDft);

void BM_FeatureMatrix(benchmark::State& state) {
  Problem problem(static_cast<Eigen::Index>(state.range(0)), 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        feature_matrix(problem.grid, problem.X).sum());
  }
}
BENCHMARK(BM_FeatureMatrix)->Arg(1024)->Arg(8192);

} // namespace

BENCHMARK_MAIN();
