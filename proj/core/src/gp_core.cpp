#include "iffgp/gp_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace iffgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void require_sigma2(double sigma2, const char* context) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw InvalidArgument(std::string(context) + ": sigma2 must be positive");
  }
}

Eigen::VectorXd sqrt_diag(const KuuDiag& kuu) {
  Eigen::VectorXd s(kuu.d.size());
  for (Eigen::Index i = 0; i < kuu.d.size(); ++i) {
    if (!(kuu.d[i] > 0.0)) {
      throw InvalidArgument("K_uu diagonal must be strictly positive");
    }
    s[i] = std::sqrt(kuu.d[i]);
  }
  return s;
}

// Shared whitened core. With K_uu = L L^T the determinant lemma and
// Woodbury identity reduce the collapsed objective to
//   F = -1/2 [ log|Bt| + N log s2 + N log 2pi ]
//       -1/2 [ nu2/s2 - w^T Bt^-1 w / s2^2 ]  -  max(t,0) / (2 s2)
// where Bt = I + s2^-1 L^-1 Phi L^-T and w = L^-1 ybar. A single M x M
// Cholesky (of Bt) is needed per evaluation.
ObjectiveValue collapsed_core(double nu2, const Eigen::VectorXd& w,
                              const Eigen::MatrixXd& phi_whitened,
                              std::int64_t n, double sigma2, double trace_t) {
  const auto m = w.size();
  const double nd = static_cast<double>(n);

  ObjectiveValue value;
  double logdet_bt = 0.0;
  double quad_inner = 0.0;
  if (m > 0) {
    Eigen::MatrixXd bt = phi_whitened / sigma2;
    bt.diagonal().array() += 1.0;
    const CholeskyResult chol = cholesky_jittered(bt, "collapsed objective");
    logdet_bt = chol.log_det;
    const Eigen::VectorXd half =
        chol.L.triangularView<Eigen::Lower>().solve(w);
    quad_inner = half.squaredNorm();
  }

  value.log_det = -0.5 * (logdet_bt + nd * std::log(sigma2));
  value.quad = -0.5 * (nu2 / sigma2 - quad_inner / (sigma2 * sigma2));
  value.constant = -0.5 * nd * kLog2Pi;
  double t_used = trace_t;
  if (trace_t < 0.0) {
    value.trace_clamped = true;
    t_used = 0.0;
  }
  value.trace = -t_used / (2.0 * sigma2);
  value.total = value.log_det + value.quad + value.trace + value.constant;
  if (!std::isfinite(value.total)) {
    throw NumericalFailure("collapsed objective is not finite");
  }
  return value;
}

void check_summary(const DataSummary& summary, Eigen::Index m,
                   const char* context) {
  if (summary.ybar.size() != m || summary.phi.rows() != m ||
      summary.phi.cols() != m) {
    throw InvalidArgument(std::string(context) +
                          ": summary dimensions do not match K_uu");
  }
}

} // namespace

CholeskyResult cholesky_jittered(const Eigen::MatrixXd& A,
                                 const std::string& context) {
  if (A.rows() != A.cols()) {
    throw InvalidArgument(context + ": matrix must be square");
  }
  const double scale =
      A.rows() > 0 ? std::max(A.diagonal().mean(), 1e-300) : 1.0;
  const double levels[] = {0.0, 1e-10, 1e-8, 1e-6};
  for (double level : levels) {
    Eigen::MatrixXd work = A;
    if (level > 0.0) work.diagonal().array() += level * scale;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);
    if (llt.info() == Eigen::Success) {
      CholeskyResult result;
      result.L = llt.matrixL();
      result.log_det = 2.0 * result.L.diagonal().array().log().sum();
      result.jitter_used = level * scale;
      return result;
    }
  }
  throw NumericalFailure(context +
                         ": Cholesky failed after jitter escalation to 1e-6");
}

double exact_log_marginal(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Kernel& kernel, double sigma2,
                          Eigen::Index dense_limit) {
  require_sigma2(sigma2, "exact_log_marginal");
  const Eigen::Index n = X.rows();
  if (n > dense_limit) {
    std::ostringstream msg;
    msg << "exact_log_marginal: N = " << n << " exceeds dense limit "
        << dense_limit;
    throw InvalidArgument(msg.str());
  }
  if (y.size() != n) {
    throw InvalidArgument("exact_log_marginal: X/y size mismatch");
  }
  Eigen::MatrixXd K = kernel_gram(kernel, X);
  K.diagonal().array() += sigma2;
  const CholeskyResult chol = cholesky_jittered(K, "exact_log_marginal");
  const Eigen::VectorXd half = chol.L.triangularView<Eigen::Lower>().solve(y);
  return -0.5 * (half.squaredNorm() + chol.log_det +
                 static_cast<double>(n) * kLog2Pi);
}

PredictiveMarginals exact_predict(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Kernel& kernel, double sigma2,
                                  const Eigen::MatrixXd& Xstar,
                                  Eigen::Index dense_limit) {
  require_sigma2(sigma2, "exact_predict");
  if (X.rows() > dense_limit) {
    throw InvalidArgument("exact_predict: N exceeds dense limit");
  }
  if (Xstar.cols() != X.cols()) {
    throw InvalidArgument("exact_predict: test input dimension mismatch");
  }
  Eigen::MatrixXd K = kernel_gram(kernel, X);
  K.diagonal().array() += sigma2;
  const CholeskyResult chol = cholesky_jittered(K, "exact_predict");

  const Eigen::MatrixXd Ksf = kernel_cross(kernel, Xstar, X); // N* x N
  const Eigen::VectorXd alpha_half =
      chol.L.triangularView<Eigen::Lower>().solve(y);
  const Eigen::MatrixXd V =
      chol.L.triangularView<Eigen::Lower>().solve(Ksf.transpose()); // N x N*

  PredictiveMarginals out;
  out.mean = V.transpose() * alpha_half;
  out.variance.resize(Xstar.rows());
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(X.cols());
  const double kss = kernel_eval(kernel, zero);
  for (Eigen::Index i = 0; i < Xstar.rows(); ++i) {
    double var = kss - V.col(i).squaredNorm();
    if (var < -1e-8) {
      throw NumericalFailure("exact_predict: negative predictive variance");
    }
    out.variance[i] = std::max(var, 1e-12);
  }
  return out;
}

ObjectiveValue collapsed_objective(const DataSummary& summary,
                                   const KuuDiag& kuu, double sigma2,
                                   double trace_t) {
  require_sigma2(sigma2, "collapsed_objective");
  const Eigen::Index m = kuu.d.size();
  check_summary(summary, m, "collapsed_objective");
  const Eigen::VectorXd root = sqrt_diag(kuu);
  Eigen::VectorXd w(m);
  Eigen::MatrixXd phi_whitened;
  if (m > 0) {
    w = summary.ybar.array() / root.array();
    phi_whitened = (1.0 / root.array()).matrix().asDiagonal() * summary.phi *
                   (1.0 / root.array()).matrix().asDiagonal();
  } else {
    phi_whitened.resize(0, 0);
  }
  return collapsed_core(summary.nu2, w, phi_whitened, summary.n, sigma2,
                        trace_t);
}

ObjectiveValue collapsed_objective(const DataSummary& summary,
                                   const Eigen::MatrixXd& Kuu, double sigma2,
                                   double trace_t) {
  require_sigma2(sigma2, "collapsed_objective");
  const Eigen::Index m = Kuu.rows();
  check_summary(summary, m, "collapsed_objective");
  const CholeskyResult chol = cholesky_jittered(Kuu, "collapsed objective K_uu");
  const Eigen::VectorXd w =
      chol.L.triangularView<Eigen::Lower>().solve(summary.ybar);
  const Eigen::MatrixXd half =
      chol.L.triangularView<Eigen::Lower>().solve(summary.phi);
  const Eigen::MatrixXd phi_whitened =
      chol.L.triangularView<Eigen::Lower>()
          .solve(half.transpose())
          .transpose();
  return collapsed_core(summary.nu2, w, phi_whitened, summary.n, sigma2,
                        trace_t);
}

VariationalState optimal_qu(const KuuDiag& kuu, const FeatureMatrix& Kuf,
                            const Eigen::VectorXd& y, double sigma2) {
  if (Kuf.rows() != kuu.d.size() || Kuf.cols() != y.size()) {
    throw InvalidArgument("optimal_qu: dimension mismatch");
  }
  DataSummary summary;
  summary.nu2 = y.squaredNorm();
  summary.ybar = Kuf * y;
  summary.phi = Kuf * Kuf.transpose();
  summary.n = y.size();
  return optimal_qu(kuu, summary, sigma2);
}

VariationalState optimal_qu(const KuuDiag& kuu, const DataSummary& summary,
                            double sigma2) {
  require_sigma2(sigma2, "optimal_qu");
  const Eigen::Index m = kuu.d.size();
  check_summary(summary, m, "optimal_qu");
  const Eigen::VectorXd root = sqrt_diag(kuu);
  // Whitened: Sigma_u = L Bt^-1 L^T, mu_u = sigma^-2 L Bt^-1 L^-1 ybar.
  Eigen::MatrixXd bt = (1.0 / root.array()).matrix().asDiagonal() *
                       summary.phi *
                       (1.0 / root.array()).matrix().asDiagonal() / sigma2;
  bt.diagonal().array() += 1.0;
  const CholeskyResult chol = cholesky_jittered(bt, "optimal_qu");
  const Eigen::MatrixXd bt_inv = chol.L.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd bt_inverse = bt_inv.transpose() * bt_inv;

  VariationalState state;
  state.sigma_u = root.asDiagonal() * bt_inverse * root.asDiagonal();
  const Eigen::VectorXd w = summary.ybar.array() / root.array();
  state.mu_u = (root.asDiagonal() * (bt_inverse * w)) / sigma2;
  return state;
}

VariationalState optimal_qu(const Eigen::MatrixXd& Kuu,
                            const Eigen::MatrixXd& Kuf,
                            const Eigen::VectorXd& y, double sigma2) {
  require_sigma2(sigma2, "optimal_qu");
  const Eigen::Index m = Kuu.rows();
  if (Kuf.rows() != m || Kuf.cols() != y.size()) {
    throw InvalidArgument("optimal_qu: dimension mismatch");
  }
  const CholeskyResult chol = cholesky_jittered(Kuu, "optimal_qu K_uu");
  const Eigen::MatrixXd Kuf_w =
      chol.L.triangularView<Eigen::Lower>().solve(Kuf);
  Eigen::MatrixXd bt = Kuf_w * Kuf_w.transpose() / sigma2;
  bt.diagonal().array() += 1.0;
  const CholeskyResult chol_bt = cholesky_jittered(bt, "optimal_qu");
  const Eigen::MatrixXd bt_inv =
      chol_bt.L.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(m, m));
  const Eigen::MatrixXd bt_inverse = bt_inv.transpose() * bt_inv;

  VariationalState state;
  state.sigma_u = chol.L * bt_inverse * chol.L.transpose();
  state.mu_u = chol.L * (bt_inverse * (Kuf_w * y)) / sigma2;
  return state;
}

namespace {

PredictiveMarginals predict_core(const VariationalState& state,
                                 const Eigen::MatrixXd& Kuu_inv_kustar,
                                 const Eigen::MatrixXd& kustar,
                                 const Kernel& kernel,
                                 const Eigen::MatrixXd& Xstar) {
  PredictiveMarginals out;
  out.mean = Kuu_inv_kustar.transpose() * state.mu_u;
  const Eigen::MatrixXd sw = state.sigma_u * Kuu_inv_kustar;
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(Xstar.cols());
  const double kss = kernel_eval(kernel, zero);
  out.variance.resize(Xstar.rows());
  for (Eigen::Index i = 0; i < Xstar.rows(); ++i) {
    const double q1 = kustar.col(i).dot(Kuu_inv_kustar.col(i));
    const double q2 = Kuu_inv_kustar.col(i).dot(sw.col(i));
    const double var = kss - q1 + q2;
    if (var < -1e-8) {
      throw NumericalFailure("sparse_predict: negative predictive variance");
    }
    out.variance[i] = std::max(var, 1e-12);
  }
  return out;
}

} // namespace

PredictiveMarginals sparse_predict(const VariationalState& state,
                                   const KuuDiag& kuu,
                                   const Eigen::MatrixXd& kustar,
                                   const Kernel& kernel,
                                   const Eigen::MatrixXd& Xstar) {
  if (kustar.rows() != kuu.d.size() || kustar.cols() != Xstar.rows() ||
      state.mu_u.size() != kuu.d.size()) {
    throw InvalidArgument("sparse_predict: dimension mismatch");
  }
  const Eigen::MatrixXd w =
      (1.0 / kuu.d.array()).matrix().asDiagonal() * kustar;
  return predict_core(state, w, kustar, kernel, Xstar);
}

PredictiveMarginals sparse_predict(const VariationalState& state,
                                   const Eigen::MatrixXd& Kuu,
                                   const Eigen::MatrixXd& kustar,
                                   const Kernel& kernel,
                                   const Eigen::MatrixXd& Xstar) {
  if (kustar.rows() != Kuu.rows() || kustar.cols() != Xstar.rows() ||
      state.mu_u.size() != Kuu.rows()) {
    throw InvalidArgument("sparse_predict: dimension mismatch");
  }
  const CholeskyResult chol = cholesky_jittered(Kuu, "sparse_predict K_uu");
  const Eigen::MatrixXd half =
      chol.L.triangularView<Eigen::Lower>().solve(kustar);
  const Eigen::MatrixXd w =
      chol.L.transpose().triangularView<Eigen::Upper>().solve(half);
  return predict_core(state, w, kustar, kernel, Xstar);
}

double trace_term(const Kernel& kernel, Eigen::Index n,
                  const FrequencyGrid& grid, const SpectralDensity& density) {
  if (n < 0) throw InvalidArgument("trace_term: negative n");
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(kernel.dim());
  const double k0 = kernel_eval(kernel, zero);
  double density_sum = 0.0;
  for (Eigen::Index m = 0; m < grid.pair_count(); ++m) {
    // Both signs contribute equally (s is even).
    density_sum += 2.0 * density(grid.half_frequencies.row(m).transpose());
  }
  const double covered = grid.eps_volume() * density_sum;
  return static_cast<double>(n) * (k0 - covered);
}

ObjectiveValue sgpr_inducing_objective(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const Kernel& kernel, double sigma2,
                                       const Eigen::MatrixXd& Z) {
  require_sigma2(sigma2, "sgpr_inducing_objective");
  if (Z.cols() != X.cols()) {
    throw InvalidArgument("sgpr_inducing_objective: Z dimension mismatch");
  }
  if (Z.rows() > X.rows()) {
    throw InvalidArgument("sgpr_inducing_objective: more inducing points than data");
  }
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < Z.rows(); ++j) {
      if ((Z.row(i) - Z.row(j)).norm() == 0.0) {
        throw InvalidArgument("sgpr_inducing_objective: duplicate inducing points");
      }
    }
  }

  const Eigen::MatrixXd Kuu = kernel_gram(kernel, Z);
  const Eigen::MatrixXd Kuf = kernel_cross(kernel, Z, X);

  DataSummary summary;
  summary.nu2 = y.squaredNorm();
  summary.ybar = Kuf * y;
  summary.phi = Kuf * Kuf.transpose();
  summary.phi = 0.5 * (summary.phi + summary.phi.transpose()).eval();
  summary.n = X.rows();

  // t = sum_n k(x_n, x_n) - || L^-1 K_uf ||_F^2 with K_uu = L L^T.
  const CholeskyResult chol = cholesky_jittered(Kuu, "sgpr K_uu");
  const Eigen::MatrixXd Kuf_w =
      chol.L.triangularView<Eigen::Lower>().solve(Kuf);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(kernel.dim());
  const double trace_t = static_cast<double>(X.rows()) *
                             kernel_eval(kernel, zero) -
                         Kuf_w.squaredNorm();

  return collapsed_objective(summary, Kuu, sigma2, trace_t);
}

} // namespace iffgp
