#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "iffgp/errors.hpp"
#include "iffgp/kernels.hpp"

namespace iffgp {

enum class GridMask { full_rectangular, spherical };

std::string to_string(GridMask mask);
GridMask grid_mask_from_string(const std::string& name);

/// Regular grid of inducing frequencies, spacing eps per dimension, stored
/// as one representative per +/- pair (the full grid is antisymmetric and
/// no frequency has a zero coordinate). Each pair contributes one cos and
/// one sin feature row, so the real feature count is 2 * pair_count().
struct FrequencyGrid {
  Eigen::VectorXd eps;              // per-dimension box width
  Eigen::MatrixXd half_frequencies; // pair_count x D, first coordinate > 0
  int per_dim_count = 0;            // even
  GridMask mask = GridMask::full_rectangular;

  Eigen::Index pair_count() const { return half_frequencies.rows(); }
  Eigen::Index feature_count() const { return 2 * half_frequencies.rows(); }
  int dim() const { return static_cast<int>(half_frequencies.cols()); }
  double eps_volume() const { return eps.prod(); }
  /// Both signs of every pair (2 * pair_count rows), representative first.
  Eigen::MatrixXd full_frequencies() const;
};

/// Conservative default box width: eps_d = 0.95 / (max_n x_nd - min_n x_nd).
Eigen::VectorXd default_epsilon(const Eigen::MatrixXd& X);

/// Builds the centered regular grid with `per_dim_count` frequencies per
/// dimension (half-integer multiples of eps, so no zero coordinates). With
/// the spherical mask, keeps the `target_pairs` pairs of smallest Euclidean
/// norm, ties broken lexicographically; pairs are always kept together.
FrequencyGrid build_grid(int per_dim_count, const Eigen::VectorXd& eps, int D,
                         GridMask mask,
                         std::optional<Eigen::Index> target_pairs = {});

using FeatureMatrix = Eigen::MatrixXd;

/// Real feature rows at the inputs X (N x D): for pair m, row 2m holds
/// cos(2 pi z_m . x_n) and row 2m+1 holds sin(2 pi z_m . x_n). Depends only
/// on the grid and the inputs, never on kernel hyperparameters.
FeatureMatrix feature_matrix(const FrequencyGrid& grid,
                             const Eigen::MatrixXd& X);

/// Diagonal prior covariance of the real features: both rows of pair m get
/// 1 / (2 eps^D s(z_m)).
struct KuuDiag {
  Eigen::VectorXd d; // length 2 * pair_count, strictly positive
};

KuuDiag kuu_diag(const FrequencyGrid& grid, const SpectralDensity& density);

} // namespace iffgp
