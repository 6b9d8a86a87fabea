#pragma once

#include <Eigen/Dense>

#include <string>

#include "iffgp/errors.hpp"
#include "iffgp/features.hpp"
#include "iffgp/kernels.hpp"
#include "iffgp/precompute.hpp"

namespace iffgp {

/// Lower Cholesky factor obtained with the jitter ladder
/// 1e-10 -> 1e-8 -> 1e-6 (scaled by the mean diagonal); hard
/// NumericalFailure after that.
struct CholeskyResult {
  Eigen::MatrixXd L;
  double log_det = 0.0;     // log |A|
  double jitter_used = 0.0; // absolute jitter added to the diagonal
};

CholeskyResult cholesky_jittered(const Eigen::MatrixXd& A,
                                 const std::string& context);

/// log N(y | 0, K_ff + sigma2 I) via Cholesky. Guarded by `dense_limit`
/// to keep the O(N^3) path at desk scale.
double exact_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Kernel& kernel, double sigma2,
                          Eigen::Index dense_limit = 5000);

struct PredictiveMarginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance; // latent f variance, strictly positive
};

/// Exact GP posterior marginals at Xstar.
PredictiveMarginals exact_predict(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Kernel& kernel, double sigma2,
                                  const Eigen::MatrixXd& Xstar,
                                  Eigen::Index dense_limit = 5000);

/// Collapsed training objective split into its additive parts
/// (total == log_det + quad + trace + constant).
struct ObjectiveValue {
  double total = 0.0;
  double log_det = 0.0;
  double quad = 0.0;
  double trace = 0.0;
  double constant = 0.0;
  /// Set when the raw trace term was negative and the trace penalty was
  /// clamped at zero.
  bool trace_clamped = false;
};

/// Collapsed objective for diagonal prior feature covariance (the IFF
/// path). One M x M Cholesky per call; cost independent of N given the
/// summary.
ObjectiveValue collapsed_objective(const DataSummary& summary,
                                   const KuuDiag& kuu, double sigma2,
                                   double trace_t);

/// Same objective through the identical whitened code path, with a dense
/// K_uu (the inducing-point case).
ObjectiveValue collapsed_objective(const DataSummary& summary,
                                   const Eigen::MatrixXd& Kuu, double sigma2,
                                   double trace_t);

struct VariationalState {
  Eigen::VectorXd mu_u;
  Eigen::MatrixXd sigma_u; // symmetric PSD
};

/// Optimal q(u): Sigma_u = K_uu B^-1 K_uu and mu_u = sigma^-2 K_uu B^-1 ybar
/// with B = K_uu + sigma^-2 K_uf K_uf^*.
VariationalState optimal_qu(const KuuDiag& kuu, const FeatureMatrix& Kuf,
                            const Eigen::VectorXd& y, double sigma2);
VariationalState optimal_qu(const Eigen::MatrixXd& Kuu,
                            const Eigen::MatrixXd& Kuf,
                            const Eigen::VectorXd& y, double sigma2);
/// Same, from precomputed summaries (prediction from a saved model).
VariationalState optimal_qu(const KuuDiag& kuu, const DataSummary& summary,
                            double sigma2);

/// Posterior predictive marginals from a variational state. `kustar` holds
/// the feature rows evaluated at the test points (M x N*).
PredictiveMarginals sparse_predict(const VariationalState& state,
                                   const KuuDiag& kuu,
                                   const Eigen::MatrixXd& kustar,
                                   const Kernel& kernel,
                                   const Eigen::MatrixXd& Xstar);
PredictiveMarginals sparse_predict(const VariationalState& state,
                                   const Eigen::MatrixXd& Kuu,
                                   const Eigen::MatrixXd& kustar,
                                   const Kernel& kernel,
                                   const Eigen::MatrixXd& Xstar);

/// IFF trace term: t_hat = n k(0) - n eps^D sum over the full grid of
/// s(z_m). The cos^2 + sin^2 collapse makes the per-point feature energy
/// independent of the inputs, so this is O(M). May be negative (midpoint
/// overshoot); callers flag and clamp it.
double trace_term(const Kernel& kernel, Eigen::Index n,
                  const FrequencyGrid& grid, const SpectralDensity& density);

/// Titsias collapsed bound for inducing points Z, through the same
/// whitened Woodbury code path as the IFF objective.
ObjectiveValue sgpr_inducing_objective(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const Kernel& kernel, double sigma2,
                                       const Eigen::MatrixXd& Z);

} // namespace iffgp
