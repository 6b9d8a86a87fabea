#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iffgp/errors.hpp"

namespace iffgp {

enum class KernelFamily { SquaredExponential, Matern12, Matern32, Matern52 };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Stationary covariance function on R^D, built as a product of 1D factors
/// (one per input dimension, each with its own lengthscale), scaled by a
/// common signal variance. For the squared exponential this coincides with
/// the usual ARD form; Matern families in D > 1 are products of 1D Materns,
/// so their spectral densities factorize across dimensions.
struct Kernel {
  std::vector<KernelFamily> families; // one per dimension
  Eigen::VectorXd lengthscales;       // one per dimension, > 0
  double signal_variance = 1.0;       // k(0), > 0

  Kernel() = default;
  Kernel(std::vector<KernelFamily> fams, Eigen::VectorXd ls, double sf2);

  /// Homogeneous product of `dim` copies of one family.
  static Kernel make(KernelFamily family, Eigen::VectorXd lengthscales,
                     double signal_variance);
  static Kernel se(Eigen::VectorXd lengthscales, double signal_variance);
  static Kernel matern12(Eigen::VectorXd lengthscales, double signal_variance);
  static Kernel matern32(Eigen::VectorXd lengthscales, double signal_variance);
  static Kernel matern52(Eigen::VectorXd lengthscales, double signal_variance);

  int dim() const { return static_cast<int>(lengthscales.size()); }
};

/// k(tau). Symmetric in tau, k(0) = signal_variance.
double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& tau);

/// Gram matrix k(x_i - x_j) for rows of X (N x D).
Eigen::MatrixXd kernel_gram(const Kernel& kernel, const Eigen::MatrixXd& X);

/// Cross-covariance k(a_i - b_j) for rows of A (M x D) and B (N x D).
Eigen::MatrixXd kernel_cross(const Kernel& kernel, const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& B);

/// s(xi) under the convention s(xi) = \int k(tau) e^{-i 2 pi tau.xi} dtau,
/// so that \int s = k(0). Nonnegative and even. Throws UnsupportedFamily
/// for families without a closed form.
double spectral_density_closed(const Kernel& kernel, const Eigen::VectorXd& xi);

enum class DensityProvenance { closed_form, dft_numeric };

/// One-dimensional density table at frequencies j / width, j = 0..J,
/// as produced by spectral_density_dft.
struct DensityTable {
  double freq_step = 0.0;        // 1 / width
  Eigen::VectorXd values;        // values[j] = s(j * freq_step), clamped
  double clamp_floor = 0.0;      // 1e-12 * max raw value
  bool truncation_warning = false;

  double max_frequency() const {
    return freq_step * static_cast<double>(values.size() - 1);
  }
  /// Linear interpolation in |xi|; beyond the table returns the last value.
  double eval(double xi) const;
};

/// Discrete Fourier transform of regularly spaced kernel evaluations on a
/// symmetric grid of the given width. `kernel_samples` holds k(tau_i) for
/// tau_i = -width/2 + i*spacing (an odd count, symmetric about 0). Output
/// densities live at frequencies j/width up to the Nyquist limit and are
/// clamped below at 1e-12 times the maximum value so that tiny negative
/// DFT artifacts cannot leak into downstream covariances.
DensityTable spectral_density_dft(const std::vector<double>& kernel_samples,
                                  double spacing, double width);

/// Regularly spaced kernel samples evaluated through the discrete-time
/// transform at arbitrary frequencies (the j/width table of
/// spectral_density_dft samples this same function). Keeping the samples
/// avoids interpolation error between table nodes.
struct DftEvaluator {
  std::vector<double> samples; // k(tau_i) on a symmetric grid, odd count
  double spacing = 0.0;
  double width = 0.0;
  double clamp_floor = 0.0;    // 1e-12 * s(0)
  bool truncation_warning = false;

  double eval(double xi) const; // clamped below at clamp_floor
};

/// Evaluates s(xi) for a kernel, either via the closed forms or via
/// per-dimension sampled transforms. Product structure across dimensions.
class SpectralDensity {
public:
  static SpectralDensity closed_form(const Kernel& kernel);
  /// Samples each 1D kernel factor on an automatically sized grid (width
  /// grows until the edge value is below 1e-6 * k(0); spacing is
  /// lengthscale / 64) and evaluates the density from those samples.
  static SpectralDensity dft_numeric(const Kernel& kernel);

  DensityProvenance provenance() const { return provenance_; }
  int dim() const { return static_cast<int>(per_dim_.size()); }
  bool truncation_warning() const;

  double operator()(const Eigen::VectorXd& xi) const;
  /// True when a DFT table factor sits at its clamp floor at xi (the value
  /// there is an artifact, not usable mass).
  bool at_clamp_floor(const Eigen::VectorXd& xi) const;
  /// 1D factor of dimension d at frequency xi (unit-variance factor).
  double eval1d(int d, double xi) const;
  /// Signal variance multiplier applied on top of the 1D factors.
  double scale() const { return scale_; }

private:
  struct Factor {
    KernelFamily family;
    double lengthscale = 1.0;
    std::optional<DftEvaluator> dft; // set for dft_numeric
  };
  DensityProvenance provenance_ = DensityProvenance::closed_form;
  std::vector<Factor> per_dim_;
  double scale_ = 1.0;
};

/// Power-law fit of the normalized spectral tail mass:
/// integral_rho^inf s_tilde <= beta * rho^(-q) on the sampled rho grid.
struct TailEstimate {
  double q = 0.0;
  double beta = 0.0;
};

/// Least-squares fit of log tail mass against log rho for a 1D density.
/// The density is normalized to unit mass numerically before fitting, and
/// beta is raised so the bound holds at every sampled rho.
TailEstimate tail_exponent_estimate(const SpectralDensity& density,
                                    const std::vector<double>& rho_grid);

} // namespace iffgp
