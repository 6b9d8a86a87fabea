#include "iffgp/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "iffgp/precompute.hpp"

namespace iffgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int round_even(double v) {
  int n = static_cast<int>(std::lround(v));
  if (n % 2 != 0) ++n;
  return std::max(2, n);
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

FrequencyGrid empty_grid(const Eigen::VectorXd& eps, int dim) {
  FrequencyGrid grid;
  grid.eps = eps;
  grid.half_frequencies.resize(0, dim);
  grid.per_dim_count = 0;
  grid.mask = GridMask::full_rectangular;
  return grid;
}

} // namespace

std::vector<GapCurveRow> gap_curve(const Dataset& data,
                                   const GapCurveConfig& config) {
  const Eigen::VectorXd eps =
      config.eps ? *config.eps : default_epsilon(data.X);
  const double nd = static_cast<double>(data.size());

  std::vector<GapCurveRow> rows;
  for (int per_dim : config.per_dim_counts) {
    GapCurveRow row;
    row.per_dim_count = per_dim;
    try {
      const FrequencyGrid grid =
          per_dim == 0
              ? empty_grid(eps, data.dim())
              : build_grid(per_dim, eps, data.dim(),
                           GridMask::full_rectangular);
      row.feature_count = grid.feature_count();

      ModelConfig model;
      model.method = FitMethod::iff;
      model.families = config.families;
      model.grid = grid;
      OptConfig opt = config.opt;
      opt.dense_limit = config.dense_limit;

      const auto tick = Clock::now();
      const FitReport report = fit(data, model, opt);
      row.wall_seconds = seconds_since(tick);

      row.objective = report.final_objective;
      const Kernel kernel = report.final_params.kernel(config.families);
      row.log_marginal =
          exact_log_marginal(data.X, data.y, kernel,
                             report.final_params.noise_variance(),
                             config.dense_limit);
      row.gap_per_n = (row.log_marginal - row.objective) / nd;
      row.bound_flag = row.objective > row.log_marginal + 1e-3 * nd;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<EpsilonSweepRow> epsilon_sweep(
    const Dataset& data, const Kernel& kernel, double sigma2,
    const std::vector<double>& m_eps_values,
    const std::vector<double>& eps_wx_values, Eigen::Index dense_limit) {
  if (data.dim() != 1) {
    throw InvalidArgument("epsilon_sweep: 1D inputs only");
  }
  const double width = data.X.col(0).maxCoeff() - data.X.col(0).minCoeff();
  if (!(width > 0.0)) throw DegenerateInput("epsilon_sweep: zero data range");
  const double nd = static_cast<double>(data.size());

  const double log_marginal =
      exact_log_marginal(data.X, data.y, kernel, sigma2, dense_limit);
  const SpectralDensity density = SpectralDensity::closed_form(kernel);

  std::vector<EpsilonSweepRow> rows;
  for (double band : m_eps_values) {
    for (double ratio : eps_wx_values) {
      EpsilonSweepRow row;
      row.m_eps = band;
      row.eps_wx = ratio;
      row.at_default = std::abs(ratio - 0.95) < 1e-12;
      try {
        row.eps = ratio / width;
        row.per_dim_count = round_even(band / row.eps);
        const Eigen::VectorXd eps_vec =
            Eigen::VectorXd::Constant(1, row.eps);
        const FrequencyGrid grid =
            build_grid(row.per_dim_count, eps_vec, 1,
                       GridMask::full_rectangular);
        const DataSummary summary =
            compute_summaries(data.X, data.y, grid);
        const KuuDiag kuu = kuu_diag(grid, density);
        const double t_hat =
            trace_term(kernel, data.size(), grid, density);
        const ObjectiveValue value =
            collapsed_objective(summary, kuu, sigma2, t_hat);
        row.gap_per_n = (log_marginal - value.total) / nd;
        row.bound_flag = value.total > log_marginal + 1e-3 * nd;
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

RateCheckResult rate_check(const Kernel& kernel, double sigma2, double q,
                           const std::vector<int>& feature_counts,
                           double eps0) {
  if (kernel.dim() != 1) throw InvalidArgument("rate_check: 1D kernels only");
  if (!(q > 0.0)) throw InvalidArgument("rate_check: q must be positive");
  if (!(eps0 > 0.0)) throw InvalidArgument("rate_check: eps0 must be positive");

  const double p = (q + 1.0) / (q + 3.0);
  const SpectralDensity density = SpectralDensity::closed_form(kernel);

  RateCheckResult result;
  result.predicted_slope = -2.0 * q / (q + 3.0);
  std::vector<double> log_m, log_t;
  for (int m : feature_counts) {
    RateCheckRow row;
    row.feature_count = m;
    row.eps = eps0 * std::pow(static_cast<double>(m), -p);
    const Eigen::VectorXd eps_vec = Eigen::VectorXd::Constant(1, row.eps);
    const FrequencyGrid grid =
        build_grid(m, eps_vec, 1, GridMask::full_rectangular);
    // t_hat is data independent after normalization; N = 1 suffices.
    const double t_hat = trace_term(kernel, 1, grid, density);
    row.t_hat_norm = t_hat / sigma2;
    row.excluded = !(row.t_hat_norm > 0.0);
    if (!row.excluded) {
      log_m.push_back(std::log(static_cast<double>(m)));
      log_t.push_back(std::log(row.t_hat_norm));
    }
    result.rows.push_back(row);
  }
  if (log_m.size() < 2) {
    throw DegenerateTail("rate_check: fewer than two positive trace values");
  }
  const double n = static_cast<double>(log_m.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < log_m.size(); ++i) {
    mx += log_m[i];
    my += log_t[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < log_m.size(); ++i) {
    sxx += (log_m[i] - mx) * (log_m[i] - mx);
    sxy += (log_m[i] - mx) * (log_t[i] - my);
  }
  result.fitted_slope = sxy / sxx;
  return result;
}

std::vector<TimingRow> timing_harness(const TimingConfig& config) {
  std::vector<TimingRow> rows;
  for (Eigen::Index n : config.n_values) {
    TimingRow row;
    row.n = n;
    try {
      // Synthetic inputs per the 1D protocol width; cheap targets (the
      // harness measures computation cost, not fit quality).
      std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(n));
      const double width = 6.0 * std::sqrt(static_cast<double>(n) / 2.0);
      std::uniform_real_distribution<double> uniform(-width / 2.0, width / 2.0);
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::MatrixXd X(n, 1);
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = uniform(rng);
        y[i] = std::sin(X(i, 0)) + 0.5 * normal(rng);
      }

      const std::vector<KernelFamily> families{
          KernelFamily::SquaredExponential};
      const HyperParams init = HyperParams::defaults(1);

      std::vector<double> pre_times, step_times;
      for (int rep = 0; rep < config.repetitions; ++rep) {
        double pre_s = 0.0;
        std::function<double(const HyperParams&)> objective;

        FrequencyGrid grid;
        DataSummary summary;
        Eigen::MatrixXd inducing;
        switch (config.method) {
          case FitMethod::iff: {
            const Eigen::VectorXd eps = default_epsilon(X);
            grid = build_grid(config.feature_count, eps, 1,
                              GridMask::full_rectangular);
            const auto tick = Clock::now();
            summary = compute_summaries(X, y, grid);
            pre_s = seconds_since(tick);
            objective = [&](const HyperParams& p) {
              const Kernel kernel = p.kernel(families);
              const SpectralDensity density =
                  SpectralDensity::closed_form(kernel);
              const KuuDiag kuu = kuu_diag(grid, density);
              const double t_hat = trace_term(kernel, n, grid, density);
              return collapsed_objective(summary, kuu, p.noise_variance(),
                                         t_hat)
                  .total;
            };
            break;
          }
          case FitMethod::sgpr_kmeans: {
            const auto tick = Clock::now();
            inducing = kmeans(X, config.feature_count, config.seed);
            pre_s = seconds_since(tick);
            objective = [&](const HyperParams& p) {
              return sgpr_inducing_objective(X, y, p.kernel(families),
                                             p.noise_variance(), inducing)
                  .total;
            };
            break;
          }
          case FitMethod::exact: {
            objective = [&](const HyperParams& p) {
              return exact_log_marginal(X, y, p.kernel(families),
                                        p.noise_variance(),
                                        config.dense_limit);
            };
            break;
          }
        }

        const auto tick = Clock::now();
        double sink = 0.0;
        for (int s = 0; s < config.steps; ++s) {
          // Slightly different parameters each step so nothing can be
          // reused between evaluations.
          HyperParams p = init;
          p.log_lengthscales.array() += 0.01 * static_cast<double>(s);
          p.log_noise_variance += 0.005 * static_cast<double>(s);
          sink += objective(p);
        }
        if (!std::isfinite(sink)) {
          throw NumericalFailure("timing_harness: objective not finite");
        }
        step_times.push_back(seconds_since(tick) /
                             static_cast<double>(config.steps));
        pre_times.push_back(pre_s);
      }
      row.precompute_seconds = median(pre_times);
      row.mean_step_seconds = median(step_times);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_csv(const std::filesystem::path& outdir, const std::string& name,
               const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
  std::filesystem::create_directories(outdir);
  const auto path = outdir / (name + ".csv");
  std::ofstream out(path);
  if (!out) throw FormatError("write_csv: cannot open " + path.string());
  for (size_t c = 0; c < columns.size(); ++c) {
    out << (c ? "," : "") << columns[c];
  }
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != columns.size()) {
      throw InvalidArgument("write_csv: row width mismatch");
    }
    for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
}

void write_manifest(const std::filesystem::path& outdir,
                    const std::vector<TableDescription>& tables) {
  std::filesystem::create_directories(outdir);
  std::ofstream out(outdir / "manifest.json");
  if (!out) throw FormatError("write_manifest: cannot open manifest.json");
  out << "{\n  \"tables\": [\n";
  for (size_t t = 0; t < tables.size(); ++t) {
    const auto& table = tables[t];
    out << "    {\"file\": \"" << table.name << ".csv\", \"rows\": "
        << table.rows << ", \"seed\": " << table.seed << ", \"columns\": [";
    for (size_t c = 0; c < table.columns.size(); ++c) {
      out << (c ? ", " : "") << "\"" << table.columns[c] << "\"";
    }
    out << "]}" << (t + 1 < tables.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
}

} // namespace iffgp
