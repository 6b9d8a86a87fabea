#include "iffgp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace iffgp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Unit-variance 1D kernel factor, u = tau / lengthscale.
double unit_kernel_1d(KernelFamily family, double u) {
  const double a = std::abs(u);
  switch (family) {
    case KernelFamily::SquaredExponential:
      return std::exp(-0.5 * a * a);
    case KernelFamily::Matern12:
      return std::exp(-a);
    case KernelFamily::Matern32: {
      const double r = std::numbers::sqrt3 * a;
      return (1.0 + r) * std::exp(-r);
    }
    case KernelFamily::Matern52: {
      const double r = std::sqrt(5.0) * a;
      return (1.0 + r + r * r / 3.0) * std::exp(-r);
    }
  }
  throw UnsupportedFamily("unknown kernel family");
}

// Unit-mass 1D spectral density factor under s(xi) = \int k e^{-i2pi tau xi}.
double unit_density_1d(KernelFamily family, double lengthscale, double xi) {
  const double b = kTwoPi * xi;
  switch (family) {
    case KernelFamily::SquaredExponential: {
      const double arg = b * lengthscale;
      return lengthscale * std::sqrt(kTwoPi) * std::exp(-0.5 * arg * arg);
    }
    case KernelFamily::Matern12: {
      const double a = 1.0 / lengthscale;
      return 2.0 * a / (a * a + b * b);
    }
    case KernelFamily::Matern32: {
      const double a = std::numbers::sqrt3 / lengthscale;
      const double d = a * a + b * b;
      return 4.0 * a * a * a / (d * d);
    }
    case KernelFamily::Matern52: {
      const double a = std::sqrt(5.0) / lengthscale;
      const double d = a * a + b * b;
      return (16.0 / 3.0) * a * a * a * a * a / (d * d * d);
    }
  }
  throw UnsupportedFamily("kernel family has no closed-form spectral density");
}

// Half-width multiplier (in lengthscales) putting the kernel edge value
// below 1e-6 for the DFT sampling grid.
double dft_half_width_factor(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential:
      return 8.0;  // exp(-32) ~ 1e-14
    case KernelFamily::Matern12:
      return 16.0; // exp(-16) ~ 1e-7
    case KernelFamily::Matern32:
      return 12.0;
    case KernelFamily::Matern52:
      return 12.0;
  }
  return 16.0;
}

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidArgument(std::string(what) + " contains non-finite values");
  }
}

// Recursive adaptive Simpson quadrature with mixed relative/absolute control.
double adaptive_simpson_rec(const std::function<double(double)>& f, double a,
                            double b, double fa, double fm, double fb,
                            double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 ||
      std::abs(delta) <= 15.0 * eps * std::max(std::abs(left + right), 1e-300)) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, eps, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, eps, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double eps = 1e-12, int depth = 40) {
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, eps, depth);
}

} // namespace

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SquaredExponential:
      return "se";
    case KernelFamily::Matern12:
      return "matern12";
    case KernelFamily::Matern32:
      return "matern32";
    case KernelFamily::Matern52:
      return "matern52";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "se" || name == "squared_exponential" || name == "rbf") {
    return KernelFamily::SquaredExponential;
  }
  if (name == "matern12") return KernelFamily::Matern12;
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "matern52") return KernelFamily::Matern52;
  throw InvalidArgument("unknown kernel family: " + name);
}

Kernel::Kernel(std::vector<KernelFamily> fams, Eigen::VectorXd ls, double sf2)
    : families(std::move(fams)), lengthscales(std::move(ls)),
      signal_variance(sf2) {
  if (families.size() != static_cast<size_t>(lengthscales.size())) {
    throw InvalidArgument("kernel: families/lengthscales size mismatch");
  }
  if (lengthscales.size() == 0) {
    throw InvalidArgument("kernel: dimension must be positive");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw InvalidArgument("kernel: signal variance must be positive");
  }
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d) {
    if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d])) {
      throw InvalidArgument("kernel: lengthscales must be positive");
    }
  }
}

Kernel Kernel::make(KernelFamily family, Eigen::VectorXd lengthscales,
                    double signal_variance) {
  std::vector<KernelFamily> fams(static_cast<size_t>(lengthscales.size()),
                                 family);
  return Kernel(std::move(fams), std::move(lengthscales), signal_variance);
}

Kernel Kernel::se(Eigen::VectorXd ls, double sf2) {
  return make(KernelFamily::SquaredExponential, std::move(ls), sf2);
}
Kernel Kernel::matern12(Eigen::VectorXd ls, double sf2) {
  return make(KernelFamily::Matern12, std::move(ls), sf2);
}
Kernel Kernel::matern32(Eigen::VectorXd ls, double sf2) {
  return make(KernelFamily::Matern32, std::move(ls), sf2);
}
Kernel Kernel::matern52(Eigen::VectorXd ls, double sf2) {
  return make(KernelFamily::Matern52, std::move(ls), sf2);
}

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& tau) {
  if (tau.size() != kernel.dim()) {
    throw InvalidArgument("kernel_eval: tau dimension mismatch");
  }
  check_finite(tau, "kernel_eval: tau");
  double value = kernel.signal_variance;
  for (int d = 0; d < kernel.dim(); ++d) {
    value *= unit_kernel_1d(kernel.families[static_cast<size_t>(d)],
                            tau[d] / kernel.lengthscales[d]);
  }
  return value;
}

Eigen::MatrixXd kernel_gram(const Kernel& kernel, const Eigen::MatrixXd& X) {
  return kernel_cross(kernel, X, X);
}

Eigen::MatrixXd kernel_cross(const Kernel& kernel, const Eigen::MatrixXd& A,
                             const Eigen::MatrixXd& B) {
  if (A.cols() != kernel.dim() || B.cols() != kernel.dim()) {
    throw InvalidArgument("kernel_cross: input dimension mismatch");
  }
  Eigen::MatrixXd K(A.rows(), B.rows());
  Eigen::VectorXd tau(kernel.dim());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      tau = A.row(i) - B.row(j);
      double value = kernel.signal_variance;
      for (int d = 0; d < kernel.dim(); ++d) {
        value *= unit_kernel_1d(kernel.families[static_cast<size_t>(d)],
                                tau[d] / kernel.lengthscales[d]);
      }
      K(i, j) = value;
    }
  }
  return K;
}

double spectral_density_closed(const Kernel& kernel,
                               const Eigen::VectorXd& xi) {
  if (xi.size() != kernel.dim()) {
    throw InvalidArgument("spectral_density_closed: xi dimension mismatch");
  }
  check_finite(xi, "spectral_density_closed: xi");
  double value = kernel.signal_variance;
  for (int d = 0; d < kernel.dim(); ++d) {
    value *= unit_density_1d(kernel.families[static_cast<size_t>(d)],
                             kernel.lengthscales[d], xi[d]);
  }
  return value;
}

double DensityTable::eval(double xi) const {
  const double f = std::abs(xi);
  const Eigen::Index n = values.size();
  if (n == 0) return 0.0;
  const double pos = f / freq_step;
  const auto j = static_cast<Eigen::Index>(pos);
  if (j >= n - 1) return values[n - 1];
  const double w = pos - static_cast<double>(j);
  return (1.0 - w) * values[j] + w * values[j + 1];
}

DensityTable spectral_density_dft(const std::vector<double>& kernel_samples,
                                  double spacing, double width) {
  if (kernel_samples.empty()) {
    throw InvalidArgument("spectral_density_dft: empty sample vector");
  }
  if (!(spacing > 0.0) || !(width > 0.0)) {
    throw InvalidArgument("spectral_density_dft: spacing/width must be positive");
  }
  const auto n = static_cast<Eigen::Index>(kernel_samples.size());
  if (n % 2 == 0) {
    throw InvalidArgument(
        "spectral_density_dft: need an odd sample count (symmetric grid)");
  }
  for (double v : kernel_samples) {
    if (!std::isfinite(v)) {
      throw InvalidArgument("spectral_density_dft: non-finite sample");
    }
  }

  DensityTable table;
  table.freq_step = 1.0 / width;
  const double center = kernel_samples[static_cast<size_t>(n / 2)];
  const double edge = std::max(std::abs(kernel_samples.front()),
                               std::abs(kernel_samples.back()));
  table.truncation_warning = edge > 1e-6 * std::abs(center);

  const Eigen::Index num_freqs = (n - 1) / 2 + 1; // up to the Nyquist limit
  table.values.resize(num_freqs);
  for (Eigen::Index j = 0; j < num_freqs; ++j) {
    const double f = static_cast<double>(j) * table.freq_step;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double tau = -0.5 * width + static_cast<double>(i) * spacing;
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0; // trapezoid ends
      acc += w * kernel_samples[static_cast<size_t>(i)] *
             std::cos(kTwoPi * tau * f);
    }
    table.values[j] = spacing * acc;
  }

  const double peak = table.values.maxCoeff();
  table.clamp_floor = 1e-12 * std::max(peak, 0.0);
  for (Eigen::Index j = 0; j < num_freqs; ++j) {
    table.values[j] = std::max(table.values[j], table.clamp_floor);
  }
  return table;
}

SpectralDensity SpectralDensity::closed_form(const Kernel& kernel) {
  SpectralDensity density;
  density.provenance_ = DensityProvenance::closed_form;
  density.scale_ = kernel.signal_variance;
  density.per_dim_.resize(static_cast<size_t>(kernel.dim()));
  for (int d = 0; d < kernel.dim(); ++d) {
    auto& factor = density.per_dim_[static_cast<size_t>(d)];
    factor.family = kernel.families[static_cast<size_t>(d)];
    factor.lengthscale = kernel.lengthscales[d];
    // Validate the family has a closed form.
    (void)unit_density_1d(factor.family, factor.lengthscale, 0.0);
  }
  return density;
}

double DftEvaluator::eval(double xi) const {
  // The samples are symmetric about zero, so the transform collapses to a
  // cosine sum over the nonnegative half.
  const auto n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index mid = n / 2;
  double acc = 0.5 * samples[static_cast<size_t>(mid)];
  for (Eigen::Index j = 1; j <= mid; ++j) {
    const double w = (j == mid) ? 0.5 : 1.0; // trapezoid ends
    acc += w * samples[static_cast<size_t>(mid + j)] *
           std::cos(kTwoPi * spacing * static_cast<double>(j) * xi);
  }
  return std::max(2.0 * spacing * acc, clamp_floor);
}

SpectralDensity SpectralDensity::dft_numeric(const Kernel& kernel) {
  SpectralDensity density;
  density.provenance_ = DensityProvenance::dft_numeric;
  density.scale_ = kernel.signal_variance;
  density.per_dim_.resize(static_cast<size_t>(kernel.dim()));
  for (int d = 0; d < kernel.dim(); ++d) {
    auto& factor = density.per_dim_[static_cast<size_t>(d)];
    factor.family = kernel.families[static_cast<size_t>(d)];
    factor.lengthscale = kernel.lengthscales[d];

    const double ls = factor.lengthscale;
    double half_width = dft_half_width_factor(factor.family) * ls;
    const double spacing = ls / 64.0;
    // Widen until the edge value satisfies the truncation precondition.
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (unit_kernel_1d(factor.family, half_width / ls) < 1e-6) break;
      half_width *= 2.0;
    }
    const auto half_n = static_cast<Eigen::Index>(
        std::ceil(half_width / spacing));

    DftEvaluator dft;
    dft.spacing = spacing;
    dft.width = 2.0 * spacing * static_cast<double>(half_n);
    dft.samples.resize(static_cast<size_t>(2 * half_n + 1));
    for (Eigen::Index i = 0; i <= 2 * half_n; ++i) {
      const double tau = spacing * static_cast<double>(i - half_n);
      dft.samples[static_cast<size_t>(i)] =
          unit_kernel_1d(factor.family, tau / ls);
    }
    dft.truncation_warning =
        std::max(std::abs(dft.samples.front()), std::abs(dft.samples.back())) >
        1e-6 * std::abs(dft.samples[static_cast<size_t>(half_n)]);
    dft.clamp_floor = 0.0;
    dft.clamp_floor = 1e-12 * std::max(dft.eval(0.0), 0.0);
    factor.dft = std::move(dft);
  }
  return density;
}

bool SpectralDensity::truncation_warning() const {
  for (const auto& factor : per_dim_) {
    if (factor.dft && factor.dft->truncation_warning) return true;
  }
  return false;
}

double SpectralDensity::eval1d(int d, double xi) const {
  const auto& factor = per_dim_[static_cast<size_t>(d)];
  if (factor.dft) return factor.dft->eval(xi);
  return unit_density_1d(factor.family, factor.lengthscale, xi);
}

bool SpectralDensity::at_clamp_floor(const Eigen::VectorXd& xi) const {
  for (int d = 0; d < dim(); ++d) {
    const auto& factor = per_dim_[static_cast<size_t>(d)];
    if (factor.dft && factor.dft->eval(xi[d]) <= factor.dft->clamp_floor) {
      return true;
    }
  }
  return false;
}

double SpectralDensity::operator()(const Eigen::VectorXd& xi) const {
  if (xi.size() != dim()) {
    throw InvalidArgument("spectral density: xi dimension mismatch");
  }
  double value = scale_;
  for (int d = 0; d < dim(); ++d) value *= eval1d(d, xi[d]);
  return value;
}

TailEstimate tail_exponent_estimate(const SpectralDensity& density,
                                    const std::vector<double>& rho_grid) {
  if (density.dim() != 1) {
    throw InvalidArgument("tail_exponent_estimate: 1D densities only");
  }
  if (rho_grid.size() < 2) {
    throw InvalidArgument("tail_exponent_estimate: need at least two rho values");
  }
  for (size_t i = 0; i < rho_grid.size(); ++i) {
    if (!(rho_grid[i] > 0.0) || (i > 0 && rho_grid[i] <= rho_grid[i - 1])) {
      throw InvalidArgument("tail_exponent_estimate: rho grid must be positive "
                            "and strictly increasing");
    }
  }

  auto f = [&density](double xi) {
    return density.eval1d(0, xi) * density.scale();
  };
  const double rho_max = rho_grid.back();
  const double cutoff = 4000.0 * rho_max;
  const double total_mass =
      2.0 * adaptive_simpson(f, 0.0, cutoff, 1e-12);
  if (!(total_mass > 0.0)) {
    throw DegenerateTail("tail_exponent_estimate: density has no mass");
  }

  const size_t n = rho_grid.size();
  std::vector<double> log_rho(n), log_mass(n);
  // Tail masses accumulated right to left so each integral is computed once.
  double acc = 2.0 * adaptive_simpson(f, rho_max, cutoff, 1e-12);
  for (size_t i = n; i-- > 0;) {
    if (i + 1 < n) {
      acc += 2.0 * adaptive_simpson(f, rho_grid[i], rho_grid[i + 1], 1e-12);
    }
    const double mass = acc / total_mass;
    if (!(mass > 0.0)) {
      std::ostringstream msg;
      msg << "tail_exponent_estimate: nonpositive tail mass at rho = "
          << rho_grid[i];
      throw DegenerateTail(msg.str());
    }
    log_rho[i] = std::log(rho_grid[i]);
    log_mass[i] = std::log(mass);
  }

  // Least squares slope of log mass vs log rho; q = -slope.
  double mean_x = 0.0, mean_y = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mean_x += log_rho[i];
    mean_y += log_mass[i];
  }
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (log_rho[i] - mean_x) * (log_rho[i] - mean_x);
    sxy += (log_rho[i] - mean_x) * (log_mass[i] - mean_y);
  }
  TailEstimate estimate;
  estimate.q = -sxy / sxx;
  if (!(estimate.q > 0.0)) {
    throw DegenerateTail("tail_exponent_estimate: fitted exponent not positive");
  }
  // Raise beta until the bound holds at every sampled rho.
  estimate.beta = 0.0;
  for (size_t i = 0; i < n; ++i) {
    estimate.beta = std::max(
        estimate.beta, std::exp(log_mass[i] + estimate.q * log_rho[i]));
  }
  return estimate;
}

} // namespace iffgp
