#include "iffgp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "iffgp/precompute.hpp"

namespace iffgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_step_failure(const Error& e) {
  return dynamic_cast<const NumericalFailure*>(&e) != nullptr ||
         dynamic_cast<const DegenerateSpectrum*>(&e) != nullptr;
}

Eigen::VectorXd central_gradient(
    const std::function<double(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = fn(probe);
    probe[i] = x[i] - h;
    const double fm = fn(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalFailure("gradient: objective not finite near the "
                             "evaluation point");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

} // namespace

HyperParams HyperParams::defaults(int dim) {
  HyperParams params;
  params.log_lengthscales =
      Eigen::VectorXd::Constant(dim, std::log(0.2));
  params.log_signal_variance = 0.0;
  params.log_noise_variance = 0.0;
  return params;
}

Eigen::VectorXd HyperParams::pack() const {
  Eigen::VectorXd theta(log_lengthscales.size() + 2);
  theta.head(log_lengthscales.size()) = log_lengthscales;
  theta[log_lengthscales.size()] = log_signal_variance;
  theta[log_lengthscales.size() + 1] = log_noise_variance;
  return theta;
}

HyperParams HyperParams::unpack(const Eigen::VectorXd& theta, int dim) {
  if (theta.size() != dim + 2) {
    throw InvalidArgument("HyperParams::unpack: size mismatch");
  }
  HyperParams params;
  params.log_lengthscales = theta.head(dim);
  params.log_signal_variance = theta[dim];
  params.log_noise_variance = theta[dim + 1];
  return params;
}

Kernel HyperParams::kernel(const std::vector<KernelFamily>& families) const {
  return Kernel(families, log_lengthscales.array().exp(),
                std::exp(log_signal_variance));
}

std::string to_string(FitMethod method) {
  switch (method) {
    case FitMethod::iff:
      return "iff";
    case FitMethod::sgpr_kmeans:
      return "sgpr_kmeans";
    case FitMethod::exact:
      return "exact";
  }
  return "unknown";
}

FitMethod fit_method_from_string(const std::string& name) {
  if (name == "iff") return FitMethod::iff;
  if (name == "sgpr_kmeans") return FitMethod::sgpr_kmeans;
  if (name == "exact") return FitMethod::exact;
  throw InvalidArgument("unknown fit method: " + name);
}

namespace detail {

OptimizeResult lbfgs_maximize(
    const std::function<double(const Eigen::VectorXd&)>& fn,
    const Eigen::VectorXd& x0, const OptConfig& config) {
  constexpr int kMemory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 10;
  constexpr int kMaxRejections = 10;

  auto safe_eval = [&fn](const Eigen::VectorXd& x) -> double {
    try {
      const double v = fn(x);
      return std::isfinite(v) ? v
                              : -std::numeric_limits<double>::infinity();
    } catch (const Error& e) {
      if (is_step_failure(e)) {
        return -std::numeric_limits<double>::infinity();
      }
      throw;
    }
  };

  OptimizeResult result;
  result.x = x0;
  result.value = fn(x0); // failure at the initial point propagates
  if (!std::isfinite(result.value)) {
    throw NumericalFailure("optimizer: objective not finite at the initial point");
  }
  result.trace.emplace_back(0, result.value);
  if (config.max_iters == 0) {
    result.converged = false;
    return result;
  }

  auto fd = [&](const Eigen::VectorXd& x) {
    return central_gradient([&](const Eigen::VectorXd& p) { return safe_eval(p); },
                            x, config.fd_step);
  };

  Eigen::VectorXd grad = fd(result.x);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory; // (s, y)
  int rejections = 0;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const auto tick = Clock::now();

    if (grad.lpNorm<Eigen::Infinity>() < config.grad_tol) {
      result.converged = true;
      break;
    }

    // Two-loop recursion on the ascent direction.
    Eigen::VectorXd d = grad;
    if (!memory.empty()) {
      std::vector<double> alpha(memory.size());
      for (size_t i = memory.size(); i-- > 0;) {
        const auto& [s, yv] = memory[i];
        const double rho = 1.0 / yv.dot(s);
        alpha[i] = rho * s.dot(d);
        d -= alpha[i] * yv;
      }
      const auto& [s_last, y_last] = memory.back();
      d *= s_last.dot(y_last) / y_last.squaredNorm();
      for (size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, yv] = memory[i];
        const double rho = 1.0 / yv.dot(s);
        d += (alpha[i] - rho * yv.dot(d)) * s;
      }
    }
    double slope = d.dot(grad);
    if (!(slope > 0.0)) { // not an ascent direction; reset
      memory.clear();
      d = grad;
      slope = d.dot(grad);
    }

    double alpha0 = 1.0;
    if (memory.empty()) {
      alpha0 = 1.0 / std::max(1.0, d.lpNorm<Eigen::Infinity>());
      alpha0 /= std::pow(10.0, rejections);
    }

    double alpha = alpha0;
    double f_new = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      x_new = result.x + alpha * d;
      f_new = safe_eval(x_new);
      if (f_new >= result.value + kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      memory.clear();
      if (++rejections >= kMaxRejections) {
        result.converged = false;
        result.step_seconds.push_back(seconds_since(tick));
        break;
      }
      result.step_seconds.push_back(seconds_since(tick));
      continue;
    }

    Eigen::VectorXd grad_new;
    try {
      grad_new = fd(x_new);
    } catch (const Error& e) {
      if (!is_step_failure(e)) throw;
      result.converged = false;
      result.step_seconds.push_back(seconds_since(tick));
      break;
    }

    const Eigen::VectorXd s = x_new - result.x;
    const Eigen::VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (-sy > 1e-12 * s.norm() * yv.norm()) {
      // Curvature condition for the maximization problem: s.(g_old - g_new)
      // positive. Stored in minimization convention.
      memory.emplace_back(s, -yv);
      if (memory.size() > kMemory) memory.pop_front();
    }

    const double change = f_new - result.value;
    result.x = x_new;
    result.value = f_new;
    grad = grad_new;
    result.trace.emplace_back(iter, result.value);
    result.step_seconds.push_back(seconds_since(tick));

    if (std::abs(change) < config.tol * std::max(1.0, std::abs(result.value))) {
      result.converged = true;
      break;
    }
  }
  return result;
}

} // namespace detail

FitReport fit(const Dataset& train, const ModelConfig& model_config,
              const OptConfig& opt_config,
              const DataSummary* precomputed_summary,
              double precompute_seconds_override) {
  const int dim = train.dim();
  if (model_config.families.size() != static_cast<size_t>(dim)) {
    throw InvalidArgument("fit: kernel families do not match data dimension");
  }
  const HyperParams init =
      model_config.init ? *model_config.init : HyperParams::defaults(dim);

  FitReport report;
  std::function<double(const Eigen::VectorXd&)> objective;
  int trace_clamps = 0;

  DataSummary summary;
  Eigen::MatrixXd inducing;
  switch (model_config.method) {
    case FitMethod::iff: {
      if (!model_config.grid) {
        throw InvalidArgument("fit: iff method requires a frequency grid");
      }
      const FrequencyGrid& grid = *model_config.grid;
      const auto tick = Clock::now();
      if (precomputed_summary) {
        summary = *precomputed_summary;
        report.precompute_seconds = precompute_seconds_override;
      } else {
        summary = compute_summaries(train.X, train.y, grid,
                                    opt_config.chunk_size, opt_config.threads);
        report.precompute_seconds = seconds_since(tick);
      }
      objective = [&train, &model_config, &summary, grid,
                   &trace_clamps](const Eigen::VectorXd& theta) {
        const HyperParams p = HyperParams::unpack(theta, train.dim());
        const Kernel kernel = p.kernel(model_config.families);
        const SpectralDensity density =
            model_config.density == DensityProvenance::closed_form
                ? SpectralDensity::closed_form(kernel)
                : SpectralDensity::dft_numeric(kernel);
        const KuuDiag kuu = kuu_diag(grid, density);
        const double t_hat = trace_term(kernel, train.size(), grid, density);
        const ObjectiveValue value =
            collapsed_objective(summary, kuu, p.noise_variance(), t_hat);
        if (value.trace_clamped) ++trace_clamps;
        return value.total;
      };
      break;
    }
    case FitMethod::sgpr_kmeans: {
      if (model_config.inducing_count < 1 ||
          model_config.inducing_count > train.size()) {
        throw InvalidArgument("fit: invalid inducing point count");
      }
      const auto tick = Clock::now();
      inducing = kmeans(train.X, model_config.inducing_count, opt_config.seed);
      report.precompute_seconds = seconds_since(tick);
      objective = [&train, &model_config, &inducing](const Eigen::VectorXd& theta) {
        const HyperParams p = HyperParams::unpack(theta, train.dim());
        return sgpr_inducing_objective(train.X, train.y,
                                       p.kernel(model_config.families),
                                       p.noise_variance(), inducing)
            .total;
      };
      break;
    }
    case FitMethod::exact: {
      if (train.size() > opt_config.dense_limit) {
        throw InvalidArgument("fit: exact method exceeds the dense limit");
      }
      objective = [&train, &model_config,
                   &opt_config](const Eigen::VectorXd& theta) {
        const HyperParams p = HyperParams::unpack(theta, train.dim());
        return exact_log_marginal(train.X, train.y,
                                  p.kernel(model_config.families),
                                  p.noise_variance(), opt_config.dense_limit);
      };
      break;
    }
  }

  std::mt19937_64 rng(opt_config.seed);
  std::normal_distribution<double> perturb(0.0, 0.5);

  detail::OptimizeResult best;
  bool have_best = false;
  for (int attempt = 0; attempt <= opt_config.restarts; ++attempt) {
    Eigen::VectorXd theta0 = init.pack();
    if (attempt > 0) {
      for (Eigen::Index i = 0; i < theta0.size(); ++i) theta0[i] += perturb(rng);
    }
    detail::OptimizeResult run =
        detail::lbfgs_maximize(objective, theta0, opt_config);
    if (!have_best || run.value > best.value) {
      best = std::move(run);
      have_best = true;
    }
  }

  report.final_params = HyperParams::unpack(best.x, dim);
  report.final_objective = best.value;
  report.objective_trace = std::move(best.trace);
  report.per_step_seconds = std::move(best.step_seconds);
  report.converged = best.converged;
  report.restarts_used = opt_config.restarts;
  report.trace_clamp_events = trace_clamps;
  return report;
}

double gradient_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                      const Eigen::VectorXd& params, double step) {
  auto checked = [&fn](const Eigen::VectorXd& x) {
    const double v = fn(x);
    if (!std::isfinite(v)) {
      throw NumericalFailure("gradient_check: objective not finite");
    }
    return v;
  };
  const Eigen::VectorXd coarse = central_gradient(checked, params, step);
  const Eigen::VectorXd fine = central_gradient(checked, params, 0.5 * step);
  const double scale = std::max(fine.lpNorm<Eigen::Infinity>(), 1e-12);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double denom = std::max(std::abs(fine[i]), 1e-12 * scale);
    worst = std::max(worst, std::abs(coarse[i] - fine[i]) / denom);
  }
  return worst;
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                       int iterations) {
  const Eigen::Index n = X.rows();
  if (k < 1 || k > n) throw InvalidArgument("kmeans: invalid cluster count");

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  Eigen::MatrixXd centers(k, X.cols());
  for (int c = 0; c < k; ++c) centers.row(c) = X.row(order[static_cast<size_t>(c)]);

  std::vector<int> assignment(static_cast<size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = (X.row(i) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assignment[static_cast<size_t>(i)] = best_c;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<size_t>(i)]) += X.row(i);
      counts[assignment[static_cast<size_t>(i)]] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Reseed an empty cluster with the point farthest from its center.
        double worst = -1.0;
        Eigen::Index worst_i = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d =
              (X.row(i) - centers.row(assignment[static_cast<size_t>(i)]))
                  .squaredNorm();
          if (d > worst) {
            worst = d;
            worst_i = i;
          }
        }
        centers.row(c) = X.row(worst_i);
        assignment[static_cast<size_t>(worst_i)] = c;
      }
    }
  }
  return centers;
}

} // namespace iffgp
