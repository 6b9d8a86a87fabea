#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iffgp/data_io.hpp"
#include "iffgp/train.hpp"

namespace iffgp {

/// One row of the gap-vs-M table. `per_dim_count` of 0 denotes the
/// empty-feature baseline row.
struct GapCurveRow {
  int per_dim_count = 0;
  Eigen::Index feature_count = 0;
  double gap_per_n = 0.0;        // (L - F) / N at the learned parameters
  double objective = 0.0;        // F at the learned parameters
  double log_marginal = 0.0;     // L at the learned parameters
  double wall_seconds = 0.0;     // fit time (precompute + optimization)
  /// F exceeded L by more than 1e-3 N; the approximation is not a strict
  /// bound, so this is a verification flag rather than a failure.
  bool bound_flag = false;
  std::string error;             // row-level failure, other rows continue
};

struct GapCurveConfig {
  std::vector<int> per_dim_counts;       // 0 allowed (no features)
  std::optional<Eigen::VectorXd> eps;    // default rule when absent
  std::vector<KernelFamily> families;
  OptConfig opt;
  Eigen::Index dense_limit = 5000;
};

/// Fits the IFF objective for each grid size and reports the normalized
/// gap to the exact log marginal likelihood at the learned parameters.
/// Every successful row re-verifies F <= L + 1e-3 N.
std::vector<GapCurveRow> gap_curve(const Dataset& data,
                                   const GapCurveConfig& config);

struct EpsilonSweepRow {
  double m_eps = 0.0;     // bandwidth covered by the grid (per_dim_count*eps)
  double eps_wx = 0.0;    // eps times the data range
  double eps = 0.0;
  int per_dim_count = 0;
  double gap_per_n = 0.0; // at the supplied (groundtruth) hyperparameters
  bool at_default = false; // marks the eps * W_x = 0.95 column
  bool bound_flag = false; // F exceeded L + 1e-3 N on this row
  std::string error;
};

/// Gap grid over (M eps bandwidth, eps * W_x) at fixed hyperparameters,
/// 1D inputs only.
std::vector<EpsilonSweepRow> epsilon_sweep(
    const Dataset& data, const Kernel& kernel, double sigma2,
    const std::vector<double>& m_eps_values,
    const std::vector<double>& eps_wx_values,
    Eigen::Index dense_limit = 5000);

struct RateCheckRow {
  int feature_count = 0;
  double eps = 0.0;
  double t_hat_norm = 0.0; // t_hat / (N sigma^2)
  bool excluded = false;   // nonpositive value, left out of the fit
};

struct RateCheckResult {
  std::vector<RateCheckRow> rows;
  double fitted_slope = 0.0; // log-log slope of t_hat/(N sigma^2) vs M
  double predicted_slope = 0.0; // -2q / (q+3)
};

/// Trace decay under the schedule eps = eps0 * M^{-(q+1)/(q+3)} for a 1D
/// kernel with tail exponent q.
RateCheckResult rate_check(const Kernel& kernel, double sigma2, double q,
                           const std::vector<int>& feature_counts,
                           double eps0);

struct TimingRow {
  Eigen::Index n = 0;
  double precompute_seconds = 0.0;
  double mean_step_seconds = 0.0;
  std::string error;
};

struct TimingConfig {
  std::vector<Eigen::Index> n_values;
  int feature_count = 200; // per-dim grid size (iff) or inducing count (sgpr)
  FitMethod method = FitMethod::iff;
  int steps = 5;        // objective evaluations averaged per repetition
  int repetitions = 5;  // median over repetitions
  std::uint64_t seed = 0;
  Eigen::Index dense_limit = 5000;
};

/// Measures precompute time and per-step objective cost on synthetic 1D
/// data of increasing size. Wall-clock values are medians over
/// `repetitions` runs.
std::vector<TimingRow> timing_harness(const TimingConfig& config);

/// CSV plus manifest.json emission; every diagnostic writes
/// <outdir>/<name>.csv and appends a table description to the manifest.
struct TableDescription {
  std::string name;
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::uint64_t seed = 0;
};

void write_csv(const std::filesystem::path& outdir, const std::string& name,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);
void write_manifest(const std::filesystem::path& outdir,
                    const std::vector<TableDescription>& tables);

} // namespace iffgp
