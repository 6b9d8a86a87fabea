#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "iffgp/data_io.hpp"

using namespace iffgp;

namespace {

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd out(1);
  out[0] = v;
  return out;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("iffgp_data_io_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

} // namespace

TEST_CASE("sample_gp_prior moments") {
  const Kernel kernel = Kernel::se(vec1(1.0), 1.0);
  Eigen::MatrixXd X(1, 1);
  X << 0.0;

  // Variance of single-point draws approaches k(0) + sigma2.
  double acc = 0.0, acc2 = 0.0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const double y = sample_gp_prior(X, kernel, 0.5, 1000 + i)[0];
    acc += y;
    acc2 += y * y;
  }
  const double var = acc2 / draws - (acc / draws) * (acc / draws);
  CHECK(var == doctest::Approx(1.5).epsilon(0.05));

  // Vanishing signal leaves pure noise.
  const Kernel tiny = Kernel::se(vec1(1.0), 1e-12);
  double nacc2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double y = sample_gp_prior(X, tiny, 0.7, 5000 + i)[0];
    nacc2 += y * y;
  }
  CHECK(nacc2 / draws == doctest::Approx(0.7).epsilon(0.05));

  // Fixed seed: identical draws.
  Eigen::MatrixXd X3(3, 1);
  X3 << 0.0, 0.5, 1.0;
  const Eigen::VectorXd a = sample_gp_prior(X3, kernel, 0.3, 42);
  const Eigen::VectorXd b = sample_gp_prior(X3, kernel, 0.3, 42);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("sampler covariance matches the prior") {
  const Kernel kernel = Kernel::se(vec1(1.0), 1.2);
  const double sigma2 = 0.4;
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  Eigen::MatrixXd target = kernel_gram(kernel, X);
  target.diagonal().array() += sigma2;

  const int draws = 2000;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  std::vector<Eigen::VectorXd> samples;
  samples.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    samples.push_back(sample_gp_prior(X, kernel, sigma2, 777 + i));
    mean += samples.back();
  }
  mean /= draws;
  for (const auto& s : samples) {
    cov += (s - mean) * (s - mean).transpose();
  }
  cov /= draws - 1;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(cov(i, j) == doctest::Approx(target(i, j)).epsilon(0.10));
    }
  }
}

TEST_CASE("spectral sampler covariance matches the prior") {
  // Same contract as the dense sampler, checked for SE and Matern-3/2.
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  for (const auto family :
       {KernelFamily::SquaredExponential, KernelFamily::Matern32}) {
    const Kernel kernel = Kernel::make(family, vec1(1.0), 1.0);
    const double sigma2 = 0.3;
    Eigen::MatrixXd target = kernel_gram(kernel, X);
    target.diagonal().array() += sigma2;

    const int draws = 2000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(draws);
    for (int i = 0; i < draws; ++i) {
      samples.push_back(
          sample_gp_prior_rff(X, kernel, sigma2, 31000 + i, 512));
      mean += samples.back();
    }
    mean /= draws;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
    for (const auto& s : samples) cov += (s - mean) * (s - mean).transpose();
    cov /= draws - 1;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CAPTURE(to_string(family));
        CHECK(cov(i, j) == doctest::Approx(target(i, j)).epsilon(0.12));
      }
    }
  }

  // Fixed seed determinism.
  const Kernel kernel = Kernel::se(vec1(1.0), 1.0);
  const Eigen::VectorXd a = sample_gp_prior_rff(X, kernel, 0.1, 9, 256);
  const Eigen::VectorXd b = sample_gp_prior_rff(X, kernel, 0.1, 9, 256);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("load_csv basics") {
  TempDir dir;
  const auto toy = dir.path / "toy.csv";
  write_file(toy, "x0,y\n1.0,2.0\n2.0,4.0\n3.0,6.0\n");
  const Dataset data = load_csv(toy, {"x0"}, "y");
  REQUIRE(data.size() == 3);
  CHECK(data.X(2, 0) == 3.0);
  CHECK(data.y[2] == 6.0);

  const auto nan_file = dir.path / "nan.csv";
  write_file(nan_file, "x0,y\n1.0,2.0\nnan,4.0\n");
  CHECK_THROWS_WITH_AS(load_csv(nan_file, {"x0"}, "y"),
                       doctest::Contains("rows 1"), InvalidArgument);

  const auto header_only = dir.path / "header.csv";
  write_file(header_only, "x0,y\n");
  CHECK_THROWS_AS(load_csv(header_only, {"x0"}, "y"), FormatError);

  const auto missing = dir.path / "missing.csv";
  write_file(missing, "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(missing, {"x0"}, "y"), SchemaError);

  CHECK_THROWS_AS(load_csv(dir.path / "absent.csv", {"x0"}, "y"),
                  FormatError);

  // The inputs-only reader tolerates a header-only file.
  const Dataset empty = load_csv_inputs(header_only, {"x0"});
  CHECK(empty.X.rows() == 0);
}

TEST_CASE("normalize_split") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset data;
  data.X.resize(50, 2);
  data.y.resize(50);
  for (int i = 0; i < 50; ++i) {
    data.X(i, 0) = 3.0 + 2.0 * g(rng);
    data.X(i, 1) = -1.0 + 0.5 * g(rng);
    data.y[i] = 10.0 + 4.0 * g(rng);
  }

  const SplitResult split = normalize_split(data, 0.8, 7);
  CHECK(split.train.size() == 40);
  CHECK(split.test.size() == 10);
  CHECK_FALSE(split.empty_test_warning);

  // Train statistics are exactly normalized.
  for (int d = 0; d < 2; ++d) {
    CHECK(split.train.X.col(d).mean() ==
          doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
    const double var = split.train.X.col(d).array().square().mean();
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(split.train.y.mean() == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(split.train.y.array().square().mean() ==
        doctest::Approx(1.0).epsilon(1e-6));

  // Round trip back to raw values.
  const Eigen::MatrixXd x_raw = split.normalization.invert_x(split.train.X);
  const Eigen::VectorXd y_raw = split.normalization.invert_y(split.train.y);
  Eigen::MatrixXd x_expected(40, 2);
  Eigen::VectorXd y_expected(40);
  for (int i = 0; i < 40; ++i) {
    x_expected.row(i) = data.X.row(split.train_indices[i]);
    y_expected[i] = data.y[split.train_indices[i]];
  }
  CHECK((x_raw - x_expected).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((y_raw - y_expected).cwiseAbs().maxCoeff() < 1e-10);

  // Determinism per seed, difference across seeds.
  const SplitResult again = normalize_split(data, 0.8, 7);
  CHECK(split.train_indices == again.train_indices);
  const SplitResult other = normalize_split(data, 0.8, 8);
  CHECK(split.train_indices != other.train_indices);

  // Full train fraction: empty test with a warning.
  const SplitResult full = normalize_split(data, 1.0, 7);
  CHECK(full.test.size() == 0);
  CHECK(full.empty_test_warning);

  // Degenerate column.
  Dataset flat = data;
  flat.X.col(1).setConstant(4.0);
  CHECK_THROWS_AS(normalize_split(flat, 0.8, 7), DegenerateInput);
  CHECK_THROWS_AS(normalize_split(data, 0.0, 7), InvalidArgument);
}

TEST_CASE("metrics") {
  Normalization identity = Normalization::identity(1);

  // Perfect predictions with unit observation variance.
  PredictiveMarginals pred;
  pred.mean = Eigen::VectorXd::Constant(4, 2.0);
  pred.variance = Eigen::VectorXd::Constant(4, 1.0);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(4, 2.0);
  const Metrics m = metrics(pred, y, identity, 0.0);
  CHECK(m.rmse == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(m.nlpd == doctest::Approx(0.9189385332046727).epsilon(1e-12));

  // Constant predictor at the mean scores the standard deviation.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd targets(2000);
  for (int i = 0; i < 2000; ++i) targets[i] = 3.0 * g(rng);
  PredictiveMarginals constant;
  constant.mean = Eigen::VectorXd::Constant(2000, targets.mean());
  constant.variance = Eigen::VectorXd::Constant(2000, 1.0);
  const Metrics mc = metrics(constant, targets, identity, 0.0);
  const double std_y = std::sqrt(
      (targets.array() - targets.mean()).square().mean());
  CHECK(mc.rmse == doctest::Approx(std_y).epsilon(1e-6));

  // Doubling the output scale doubles the RMSE exactly.
  Normalization doubled = identity;
  doubled.y_scale = 2.0;
  PredictiveMarginals off;
  off.mean = Eigen::VectorXd::Constant(3, 1.0);
  off.variance = Eigen::VectorXd::Constant(3, 0.5);
  Eigen::VectorXd y3 = Eigen::VectorXd::Constant(3, 2.0);
  const Metrics m1 = metrics(off, y3, identity, 0.1);
  const Metrics m2 = metrics(off, y3, doubled, 0.1);
  CHECK(m2.rmse == doctest::Approx(2.0 * m1.rmse).epsilon(1e-14));

  // Nonpositive predictive variance is an error, never silently clipped.
  PredictiveMarginals bad;
  bad.mean = Eigen::VectorXd::Zero(1);
  bad.variance = Eigen::VectorXd::Constant(1, 0.0);
  CHECK_THROWS_AS(metrics(bad, Eigen::VectorXd::Zero(1), identity, 0.0),
                  NumericalFailure);
}
