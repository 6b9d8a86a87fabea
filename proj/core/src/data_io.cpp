#include "iffgp/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace iffgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

} // namespace

Normalization Normalization::identity(int dim) {
  Normalization norm;
  norm.x_shift = Eigen::VectorXd::Zero(dim);
  norm.x_scale = Eigen::VectorXd::Ones(dim);
  return norm;
}

Eigen::MatrixXd Normalization::apply_x(const Eigen::MatrixXd& X) const {
  return (X.rowwise() - x_shift.transpose()).array().rowwise() /
         x_scale.transpose().array();
}

Eigen::VectorXd Normalization::apply_y(const Eigen::VectorXd& y) const {
  return (y.array() - y_shift) / y_scale;
}

Eigen::MatrixXd Normalization::invert_x(const Eigen::MatrixXd& X) const {
  return (X.array().rowwise() * x_scale.transpose().array()).matrix().rowwise() +
         x_shift.transpose();
}

Eigen::VectorXd Normalization::invert_y(const Eigen::VectorXd& y) const {
  return y.array() * y_scale + y_shift;
}

Eigen::VectorXd sample_gp_prior(const Eigen::MatrixXd& X, const Kernel& kernel,
                                double sigma2, std::uint64_t seed,
                                Eigen::Index dense_limit) {
  if (X.rows() > dense_limit) {
    throw InvalidArgument("sample_gp_prior: N exceeds dense limit");
  }
  if (!(sigma2 >= 0.0)) {
    throw InvalidArgument("sample_gp_prior: sigma2 must be nonnegative");
  }
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K = kernel_gram(kernel, X);
  K.diagonal().array() += 1e-10 * kernel.signal_variance;
  const CholeskyResult chol = cholesky_jittered(K, "sample_gp_prior");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd zeta(n), noise(n);
  for (Eigen::Index i = 0; i < n; ++i) zeta[i] = normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) noise[i] = normal(rng);
  return chol.L.triangularView<Eigen::Lower>() * zeta +
         std::sqrt(sigma2) * noise;
}

namespace {

Eigen::MatrixXd load_csv_columns(const std::filesystem::path& path,
                                 const std::vector<std::string>& columns,
                                 bool allow_empty) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_csv: cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("load_csv: empty file " + path.string());
  }
  const std::vector<std::string> header_fields = split_line(line);
  std::vector<std::string> header(header_fields.size());
  std::transform(header_fields.begin(), header_fields.end(), header.begin(),
                 strip);

  std::vector<Eigen::Index> idx;
  idx.reserve(columns.size());
  for (const auto& name : columns) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError("load_csv: missing column '" + name + "' in " +
                        path.string());
    }
    idx.push_back(static_cast<Eigen::Index>(it - header.begin()));
  }

  std::vector<std::vector<double>> rows;
  std::vector<Eigen::Index> bad_rows;
  Eigen::Index row_number = 0;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "load_csv: row " << row_number << " has " << fields.size()
          << " fields, expected " << header.size();
      throw FormatError(msg.str());
    }
    std::vector<double> parsed(idx.size());
    bool ok = true;
    for (size_t c = 0; c < idx.size(); ++c) {
      const std::string cell = strip(fields[static_cast<size_t>(idx[c])]);
      try {
        size_t used = 0;
        parsed[c] = std::stod(cell, &used);
        if (used != cell.size() || !std::isfinite(parsed[c])) ok = false;
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      bad_rows.push_back(row_number);
    } else {
      rows.push_back(std::move(parsed));
    }
    ++row_number;
  }

  if (!bad_rows.empty()) {
    std::ostringstream msg;
    msg << "load_csv: non-finite or unparsable values in rows";
    for (auto r : bad_rows) msg << " " << r;
    throw InvalidArgument(msg.str());
  }
  if (rows.empty() && !allow_empty) {
    throw FormatError("load_csv: no data rows in " + path.string());
  }

  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(columns.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < columns.size(); ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
    }
  }
  return out;
}

} // namespace

Eigen::VectorXd sample_gp_prior_rff(const Eigen::MatrixXd& X,
                                    const Kernel& kernel, double sigma2,
                                    std::uint64_t seed, int num_features) {
  if (num_features < 1) {
    throw InvalidArgument("sample_gp_prior_rff: need at least one feature");
  }
  if (!(sigma2 >= 0.0)) {
    throw InvalidArgument("sample_gp_prior_rff: sigma2 must be nonnegative");
  }
  const Eigen::Index n = X.rows();
  const int dim = static_cast<int>(X.cols());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);

  // Per-dimension frequency draw from the normalized spectral density. The
  // squared exponential factor is Gaussian; a Matern-nu factor is a
  // Student-t with 2 nu degrees of freedom scaled by sqrt(2 nu)/(2 pi l).
  auto draw_frequency = [&](int d) {
    const double ls = kernel.lengthscales[d];
    const auto family = kernel.families[static_cast<size_t>(d)];
    if (family == KernelFamily::SquaredExponential) {
      return normal(rng) / (2.0 * std::numbers::pi * ls);
    }
    double two_nu = 1.0;
    if (family == KernelFamily::Matern32) two_nu = 3.0;
    if (family == KernelFamily::Matern52) two_nu = 5.0;
    std::chi_squared_distribution<double> chi2(two_nu);
    const double t = normal(rng) / std::sqrt(chi2(rng) / two_nu);
    return t / (2.0 * std::numbers::pi * ls);
  };

  Eigen::MatrixXd omega(num_features, dim);
  Eigen::VectorXd phase(num_features);
  for (int j = 0; j < num_features; ++j) {
    for (int d = 0; d < dim; ++d) omega(j, d) = draw_frequency(d);
    phase[j] = uniform(rng);
  }

  const double amplitude = std::sqrt(2.0 * kernel.signal_variance /
                                     static_cast<double>(num_features));
  Eigen::VectorXd y(n);
  const Eigen::MatrixXd angles =
      2.0 * std::numbers::pi * (X * omega.transpose());
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < num_features; ++j) {
      acc += std::cos(angles(i, j) + phase[j]);
    }
    y[i] = amplitude * acc + std::sqrt(sigma2) * normal(rng);
  }
  return y;
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::vector<std::string>& x_columns,
                 const std::string& y_column) {
  std::vector<std::string> columns = x_columns;
  columns.push_back(y_column);
  const Eigen::MatrixXd all = load_csv_columns(path, columns, false);
  Dataset dataset;
  dataset.X = all.leftCols(static_cast<Eigen::Index>(x_columns.size()));
  dataset.y = all.col(all.cols() - 1);
  return dataset;
}

Dataset load_csv_inputs(const std::filesystem::path& path,
                        const std::vector<std::string>& x_columns) {
  Dataset dataset;
  dataset.X = load_csv_columns(path, x_columns, true);
  dataset.y.resize(0);
  return dataset;
}

SplitResult normalize_split(const Dataset& dataset, double train_fraction,
                            std::uint64_t seed) {
  const Eigen::Index n = dataset.size();
  if (n < 5) throw InvalidArgument("normalize_split: need at least 5 rows");
  if (!(train_fraction > 0.0) || train_fraction > 1.0) {
    throw InvalidArgument("normalize_split: train_fraction must be in (0, 1]");
  }

  std::vector<Eigen::Index> indices(static_cast<size_t>(n));
  std::iota(indices.begin(), indices.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(indices.begin(), indices.end(), rng);

  const auto n_train = static_cast<Eigen::Index>(
      std::llround(train_fraction * static_cast<double>(n)));
  SplitResult result;
  result.empty_test_warning = n_train >= n;
  result.train_indices.assign(indices.begin(), indices.begin() + n_train);
  result.test_indices.assign(indices.begin() + n_train, indices.end());

  Eigen::MatrixXd x_train(n_train, dataset.dim());
  Eigen::VectorXd y_train(n_train);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    x_train.row(i) = dataset.X.row(result.train_indices[static_cast<size_t>(i)]);
    y_train[i] = dataset.y[result.train_indices[static_cast<size_t>(i)]];
  }

  Normalization norm;
  norm.x_shift = x_train.colwise().mean();
  norm.x_scale.resize(dataset.dim());
  for (Eigen::Index d = 0; d < dataset.dim(); ++d) {
    const double var =
        (x_train.col(d).array() - norm.x_shift[d]).square().mean();
    if (!(var > 0.0)) {
      std::ostringstream msg;
      msg << "normalize_split: zero variance in input column " << d;
      throw DegenerateInput(msg.str());
    }
    norm.x_scale[d] = std::sqrt(var);
  }
  norm.y_shift = y_train.mean();
  const double y_var = (y_train.array() - norm.y_shift).square().mean();
  if (!(y_var > 0.0)) {
    throw DegenerateInput("normalize_split: zero variance in targets");
  }
  norm.y_scale = std::sqrt(y_var);

  result.normalization = norm;
  result.train.X = norm.apply_x(x_train);
  result.train.y = norm.apply_y(y_train);

  const auto n_test = static_cast<Eigen::Index>(result.test_indices.size());
  Eigen::MatrixXd x_test(n_test, dataset.dim());
  Eigen::VectorXd y_test(n_test);
  for (Eigen::Index i = 0; i < n_test; ++i) {
    x_test.row(i) = dataset.X.row(result.test_indices[static_cast<size_t>(i)]);
    y_test[i] = dataset.y[result.test_indices[static_cast<size_t>(i)]];
  }
  result.test.X = norm.apply_x(x_test);
  result.test.y = norm.apply_y(y_test);
  return result;
}

Metrics metrics(const PredictiveMarginals& pred, const Eigen::VectorXd& y_test,
                const Normalization& normalization, double noise_variance) {
  const Eigen::Index n = y_test.size();
  if (pred.mean.size() != n || pred.variance.size() != n) {
    throw InvalidArgument("metrics: dimension mismatch");
  }
  if (!(noise_variance >= 0.0)) {
    throw InvalidArgument("metrics: noise variance must be nonnegative");
  }
  const double ys = normalization.y_scale;
  const double ym = normalization.y_shift;

  Metrics out;
  double se = 0.0;
  double nlpd = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean_un = pred.mean[i] * ys + ym;
    const double var_un = (pred.variance[i] + noise_variance) * ys * ys;
    if (!(var_un > 0.0)) {
      std::ostringstream msg;
      msg << "metrics: nonpositive predictive variance at test point " << i;
      throw NumericalFailure(msg.str());
    }
    const double y_un = y_test[i] * ys + ym;
    const double r = y_un - mean_un;
    se += r * r;
    nlpd += 0.5 * (kLog2Pi + std::log(var_un) + r * r / var_un);
  }
  out.rmse = std::sqrt(se / static_cast<double>(n));
  out.nlpd = nlpd / static_cast<double>(n);
  return out;
}

} // namespace iffgp
