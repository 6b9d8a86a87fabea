#include "iffgp/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

namespace iffgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    if (a[d] < b[d]) return true;
    if (a[d] > b[d]) return false;
  }
  return false;
}

} // namespace

std::string to_string(GridMask mask) {
  return mask == GridMask::spherical ? "spherical" : "full_rectangular";
}

GridMask grid_mask_from_string(const std::string& name) {
  if (name == "spherical") return GridMask::spherical;
  if (name == "full_rectangular" || name == "full") {
    return GridMask::full_rectangular;
  }
  throw InvalidArgument("unknown grid mask: " + name);
}

Eigen::MatrixXd FrequencyGrid::full_frequencies() const {
  Eigen::MatrixXd full(2 * half_frequencies.rows(), half_frequencies.cols());
  full.topRows(half_frequencies.rows()) = half_frequencies;
  full.bottomRows(half_frequencies.rows()) = -half_frequencies;
  return full;
}

Eigen::VectorXd default_epsilon(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) {
    throw InvalidArgument("default_epsilon: need at least two inputs");
  }
  Eigen::VectorXd eps(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double range = X.col(d).maxCoeff() - X.col(d).minCoeff();
    if (!(range > 0.0)) {
      std::ostringstream msg;
      msg << "default_epsilon: zero range in dimension " << d;
      throw DegenerateInput(msg.str());
    }
    eps[d] = 0.95 / range;
  }
  return eps;
}

FrequencyGrid build_grid(int per_dim_count, const Eigen::VectorXd& eps, int D,
                         GridMask mask,
                         std::optional<Eigen::Index> target_pairs) {
  if (per_dim_count < 2 || per_dim_count % 2 != 0) {
    throw InvalidArgument(
        "build_grid: per-dimension count must be even and >= 2 (a zero "
        "frequency would make a sin row identically zero)");
  }
  if (D < 1) throw InvalidArgument("build_grid: dimension must be positive");
  Eigen::VectorXd eps_d;
  if (eps.size() == D) {
    eps_d = eps;
  } else if (eps.size() == 1) {
    eps_d = Eigen::VectorXd::Constant(D, eps[0]);
  } else {
    throw InvalidArgument("build_grid: eps must have size 1 or D");
  }
  for (Eigen::Index d = 0; d < D; ++d) {
    if (!(eps_d[d] > 0.0)) {
      throw InvalidArgument("build_grid: eps must be positive");
    }
  }
  if (target_pairs && mask != GridMask::spherical) {
    throw InvalidArgument("build_grid: target_pairs requires the spherical mask");
  }

  double total = std::pow(static_cast<double>(per_dim_count), D);
  if (total > static_cast<double>(1 << 22)) {
    throw InvalidArgument("build_grid: grid too large");
  }
  const auto full_count = static_cast<Eigen::Index>(total);

  // Per-dimension values (m - (C+1)/2) * eps for m = 1..C: half-integer
  // multiples of eps, symmetric about zero, none of them zero.
  std::vector<Eigen::VectorXd> axis(static_cast<size_t>(D));
  for (Eigen::Index d = 0; d < D; ++d) {
    Eigen::VectorXd vals(per_dim_count);
    for (int m = 1; m <= per_dim_count; ++m) {
      vals[m - 1] =
          (static_cast<double>(m) - (static_cast<double>(per_dim_count) + 1.0) / 2.0) *
          eps_d[d];
    }
    axis[static_cast<size_t>(d)] = vals;
  }

  // Enumerate the full grid lexicographically; keep pair representatives
  // (first coordinate positive, since no coordinate is ever zero).
  std::vector<Eigen::VectorXd> reps;
  reps.reserve(static_cast<size_t>(full_count / 2));
  std::vector<int> index(static_cast<size_t>(D), 0);
  Eigen::VectorXd z(D);
  for (Eigen::Index count = 0; count < full_count; ++count) {
    for (Eigen::Index d = 0; d < D; ++d) {
      z[d] = axis[static_cast<size_t>(d)][index[static_cast<size_t>(d)]];
    }
    bool positive = false;
    for (Eigen::Index d = 0; d < D; ++d) {
      if (z[d] != 0.0) {
        positive = z[d] > 0.0;
        break;
      }
    }
    if (positive) reps.push_back(z);
    for (Eigen::Index d = D - 1; d >= 0; --d) {
      if (++index[static_cast<size_t>(d)] < per_dim_count) break;
      index[static_cast<size_t>(d)] = 0;
    }
  }

  if (mask == GridMask::spherical && target_pairs) {
    if (*target_pairs < 1 ||
        *target_pairs > static_cast<Eigen::Index>(reps.size())) {
      std::ostringstream msg;
      msg << "build_grid: target_pairs " << *target_pairs
          << " outside [1, " << reps.size() << "]";
      throw InvalidArgument(msg.str());
    }
    std::stable_sort(reps.begin(), reps.end(),
                     [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
                       const double na = a.squaredNorm();
                       const double nb = b.squaredNorm();
                       if (na != nb) return na < nb;
                       return lex_less(a, b);
                     });
    reps.resize(static_cast<size_t>(*target_pairs));
    // Restore lexicographic order so mask output matches the rectangular
    // layout when nothing is dropped.
    std::sort(reps.begin(), reps.end(), lex_less);
  }

  FrequencyGrid grid;
  grid.eps = eps_d;
  grid.per_dim_count = per_dim_count;
  grid.mask = mask;
  grid.half_frequencies.resize(static_cast<Eigen::Index>(reps.size()), D);
  for (size_t i = 0; i < reps.size(); ++i) {
    grid.half_frequencies.row(static_cast<Eigen::Index>(i)) = reps[i];
  }
  return grid;
}

FeatureMatrix feature_matrix(const FrequencyGrid& grid,
                             const Eigen::MatrixXd& X) {
  if (X.cols() != grid.dim()) {
    throw InvalidArgument("feature_matrix: input dimension mismatch");
  }
  if (!X.allFinite()) {
    throw InvalidArgument("feature_matrix: non-finite inputs");
  }
  const Eigen::Index pairs = grid.pair_count();
  // Phase matrix 2 pi X Z^T, then cos/sin rows interleaved per pair.
  Eigen::MatrixXd phase = kTwoPi * (grid.half_frequencies * X.transpose());
  FeatureMatrix F(2 * pairs, X.rows());
  for (Eigen::Index m = 0; m < pairs; ++m) {
    F.row(2 * m) = phase.row(m).array().cos();
    F.row(2 * m + 1) = phase.row(m).array().sin();
  }
  return F;
}

KuuDiag kuu_diag(const FrequencyGrid& grid, const SpectralDensity& density) {
  if (density.dim() != grid.dim()) {
    throw InvalidArgument("kuu_diag: density dimension mismatch");
  }
  const double eps_volume = grid.eps_volume();
  KuuDiag kuu;
  kuu.d.resize(grid.feature_count());
  for (Eigen::Index m = 0; m < grid.pair_count(); ++m) {
    const Eigen::VectorXd z = grid.half_frequencies.row(m).transpose();
    const double s = density(z);
    if (!(s > 0.0) || !std::isfinite(s) || density.at_clamp_floor(z)) {
      std::ostringstream msg;
      msg << "kuu_diag: spectral density not positive at frequency (";
      for (Eigen::Index d = 0; d < grid.dim(); ++d) {
        msg << (d ? ", " : "") << grid.half_frequencies(m, d);
      }
      msg << ")";
      throw DegenerateSpectrum(msg.str());
    }
    const double value = 1.0 / (2.0 * eps_volume * s);
    kuu.d[2 * m] = value;
    kuu.d[2 * m + 1] = value;
  }
  return kuu;
}

} // namespace iffgp
