#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "iffgp/errors.hpp"
#include "iffgp/gp_core.hpp"
#include "iffgp/kernels.hpp"

namespace iffgp {

/// Affine per-dimension input transform and output transform. Normalized
/// values are (raw - shift) / scale.
struct Normalization {
  Eigen::VectorXd x_shift;
  Eigen::VectorXd x_scale;
  double y_shift = 0.0;
  double y_scale = 1.0;

  static Normalization identity(int dim);
  Eigen::MatrixXd apply_x(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd apply_y(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd invert_x(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd invert_y(const Eigen::VectorXd& y) const;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Eigen::Index size() const { return X.rows(); }
  int dim() const { return static_cast<int>(X.cols()); }
};

/// Draws y = L zeta + sigma zeta' with K_ff = L L^T (jittered Cholesky).
/// Deterministic for a fixed seed.
Eigen::VectorXd sample_gp_prior(const Eigen::MatrixXd& X, const Kernel& kernel,
                                double sigma2, std::uint64_t seed,
                                Eigen::Index dense_limit = 5000);

/// Spectral prior draw for datasets beyond the dense limit: frequencies are
/// sampled from the kernel's normalized spectral density (Gaussian for the
/// squared exponential, scaled Student-t for Materns) and the path is a
/// random cosine expansion. Covariance error decays as 1/sqrt(num_features).
Eigen::VectorXd sample_gp_prior_rff(const Eigen::MatrixXd& X,
                                    const Kernel& kernel, double sigma2,
                                    std::uint64_t seed,
                                    int num_features = 4096);

/// Strict CSV reader: comma-separated, required header row, '.' decimals,
/// no quoting. Rejects non-finite rows with their indices.
Dataset load_csv(const std::filesystem::path& path,
                 const std::vector<std::string>& x_columns,
                 const std::string& y_column);

/// Same dialect, input columns only (y left empty). A header-only file is
/// allowed and yields zero rows.
Dataset load_csv_inputs(const std::filesystem::path& path,
                        const std::vector<std::string>& x_columns);

struct SplitResult {
  Dataset train; // normalized
  Dataset test;  // normalized with the train statistics
  Normalization normalization;
  std::vector<Eigen::Index> train_indices;
  std::vector<Eigen::Index> test_indices;
  bool empty_test_warning = false;
};

/// Uniformly random train/test split; normalization (zero mean, unit
/// standard deviation per dimension) is computed on the train rows only
/// and applied to both sides.
SplitResult normalize_split(const Dataset& dataset, double train_fraction,
                            std::uint64_t seed);

struct Metrics {
  double rmse = 0.0;
  double nlpd = 0.0;
};

/// Test metrics on the unnormalized scale. `pred` holds latent marginals
/// in the normalized space; `noise_variance` (normalized space) is added
/// for the predictive density of observations.
Metrics metrics(const PredictiveMarginals& pred, const Eigen::VectorXd& y_test,
                const Normalization& normalization, double noise_variance);

} // namespace iffgp
