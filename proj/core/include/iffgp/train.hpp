#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "iffgp/data_io.hpp"
#include "iffgp/gp_core.hpp"

namespace iffgp {

/// Log-parameterized hyperparameters; exponentiation keeps every raw
/// parameter positive by construction.
struct HyperParams {
  Eigen::VectorXd log_lengthscales;
  double log_signal_variance = 0.0;
  double log_noise_variance = 0.0;

  /// Appendix-style defaults: lengthscales 0.2, unit signal and noise
  /// variances.
  static HyperParams defaults(int dim);

  Eigen::VectorXd pack() const;
  static HyperParams unpack(const Eigen::VectorXd& theta, int dim);

  Kernel kernel(const std::vector<KernelFamily>& families) const;
  double noise_variance() const { return std::exp(log_noise_variance); }
};

enum class FitMethod { iff, sgpr_kmeans, exact };

std::string to_string(FitMethod method);
FitMethod fit_method_from_string(const std::string& name);

struct ModelConfig {
  FitMethod method = FitMethod::iff;
  std::vector<KernelFamily> families;
  DensityProvenance density = DensityProvenance::closed_form;
  std::optional<FrequencyGrid> grid; // required for iff
  int inducing_count = 0;            // required for sgpr_kmeans
  std::optional<HyperParams> init;   // defaults when absent
};

struct OptConfig {
  int max_iters = 100;
  double tol = 1e-8;        // relative objective change
  double grad_tol = 1e-6;   // gradient infinity norm
  int restarts = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  Eigen::Index chunk_size = 10000;
  double fd_step = 1e-4;    // central-difference step on log parameters
  Eigen::Index dense_limit = 5000;
};

struct FitReport {
  HyperParams final_params;
  double final_objective = 0.0;
  std::vector<std::pair<int, double>> objective_trace; // (step, objective)
  double precompute_seconds = 0.0;
  std::vector<double> per_step_seconds;
  bool converged = false;
  int restarts_used = 0;
  int trace_clamp_events = 0;
};

/// Hyperparameter optimization of the method's training objective over
/// log-parameters with a quasi-Newton ascent (L-BFGS memory 10, Armijo
/// backtracking, central finite-difference gradients). For IFF the data
/// summaries are computed exactly once, before the optimization loop;
/// per-step timings exclude that precompute.
FitReport fit(const Dataset& train, const ModelConfig& model_config,
              const OptConfig& opt_config,
              const DataSummary* precomputed_summary = nullptr,
              double precompute_seconds_override = 0.0);

/// Compares central differences at steps h and h/2; returns the largest
/// relative deviation across coordinates. Throws NumericalFailure if the
/// objective is non-finite anywhere it is evaluated.
double gradient_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                      const Eigen::VectorXd& params, double step);

/// Lloyd's k-means (seeded, fixed iteration count); returns k x D centers.
Eigen::MatrixXd kmeans(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                       int iterations = 25);

namespace detail {

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::vector<std::pair<int, double>> trace;
  std::vector<double> step_seconds;
  bool converged = false;
};

/// Maximizes fn from x0. Evaluations that throw NumericalFailure or
/// DegenerateSpectrum reject the step; a failure at x0 propagates.
OptimizeResult lbfgs_maximize(
    const std::function<double(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& x0, const OptConfig& config);

} // namespace detail

} // namespace iffgp
