#include "iffgp/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "iffgp/data_io.hpp"
#include "iffgp/diagnostics.hpp"
#include "iffgp/features.hpp"
#include "iffgp/gp_core.hpp"
#include "iffgp/precompute.hpp"
#include "iffgp/train.hpp"

namespace iffgp::cli {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json parsed;
  try {
    in >> parsed;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " +
                      e.what());
  }
  return parsed;
}

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw ConfigError(context + " must be a JSON object");
  }
  std::vector<std::string> unknown;
  for (const auto& item : obj.items()) {
    bool found = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        found = true;
        break;
      }
    }
    if (!found) unknown.push_back(item.key());
  }
  if (!unknown.empty()) {
    std::ostringstream msg;
    msg << context << ": unknown keys:";
    for (const auto& key : unknown) msg << " '" << key << "'";
    throw ConfigError(msg.str());
  }
}

double require_positive(const json& v, const std::string& context) {
  if (!v.is_number()) throw ConfigError(context + " must be a number");
  const double value = v.get<double>();
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(context + " must be positive, got " +
                      std::to_string(value));
  }
  return value;
}

Eigen::VectorXd parse_positive_vector(const json& v, int dim,
                                      const std::string& context) {
  Eigen::VectorXd out(dim);
  if (v.is_number()) {
    out.setConstant(require_positive(v, context));
    return out;
  }
  if (!v.is_array() || static_cast<int>(v.size()) != dim) {
    throw ConfigError(context + " must be a number or an array of length " +
                      std::to_string(dim));
  }
  for (int d = 0; d < dim; ++d) {
    out[d] = require_positive(v[static_cast<size_t>(d)],
                              context + "[" + std::to_string(d) + "]");
  }
  return out;
}

struct KernelConfig {
  std::vector<KernelFamily> families;
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1.0;
  DensityProvenance density = DensityProvenance::closed_form;
};

KernelConfig parse_kernel(const json& obj, int dim,
                          const std::string& context) {
  check_keys(obj, context,
             {"family", "lengthscales", "signal_variance", "noise_variance",
              "density"});
  KernelConfig config;
  if (!obj.contains("family")) {
    throw ConfigError(context + ": missing 'family'");
  }
  if (obj["family"].is_string()) {
    config.families.assign(static_cast<size_t>(dim),
                           kernel_family_from_string(obj["family"]));
  } else if (obj["family"].is_array()) {
    if (static_cast<int>(obj["family"].size()) != dim) {
      throw ConfigError(context + ": family list must have one entry per "
                        "input dimension");
    }
    for (const auto& f : obj["family"]) {
      config.families.push_back(kernel_family_from_string(f));
    }
  } else {
    throw ConfigError(context + ": 'family' must be a string or list");
  }
  config.lengthscales =
      obj.contains("lengthscales")
          ? parse_positive_vector(obj["lengthscales"], dim,
                                  context + ".lengthscales")
          : Eigen::VectorXd::Constant(dim, 0.2);
  config.signal_variance =
      obj.contains("signal_variance")
          ? require_positive(obj["signal_variance"],
                             context + ".signal_variance")
          : 1.0;
  config.noise_variance =
      obj.contains("noise_variance")
          ? require_positive(obj["noise_variance"],
                             context + ".noise_variance")
          : 1.0;
  if (obj.contains("density")) {
    const std::string name = obj["density"];
    if (name == "closed_form") {
      config.density = DensityProvenance::closed_form;
    } else if (name == "dft_numeric") {
      config.density = DensityProvenance::dft_numeric;
    } else {
      throw ConfigError(context + ": density must be 'closed_form' or "
                        "'dft_numeric'");
    }
  }
  return config;
}

struct DataConfig {
  Dataset raw;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::vector<std::string> x_columns;
  json resolved; // echo for the report
};

DataConfig parse_data(const json& obj) {
  check_keys(obj, "data",
             {"csv", "x_columns", "y_column", "synthetic", "train_fraction",
              "split_seed"});
  DataConfig out;
  if (obj.contains("train_fraction")) {
    out.train_fraction = obj["train_fraction"].get<double>();
  }
  if (obj.contains("split_seed")) {
    out.split_seed = obj["split_seed"].get<std::uint64_t>();
  }
  out.resolved = obj;

  if (obj.contains("csv")) {
    if (obj.contains("synthetic")) {
      throw ConfigError("data: give either 'csv' or 'synthetic', not both");
    }
    if (!obj.contains("x_columns") || !obj.contains("y_column")) {
      throw ConfigError("data: csv input requires 'x_columns' and 'y_column'");
    }
    out.x_columns = obj["x_columns"].get<std::vector<std::string>>();
    out.raw = load_csv(obj["csv"].get<std::string>(), out.x_columns,
                       obj["y_column"].get<std::string>());
    return out;
  }
  if (!obj.contains("synthetic")) {
    throw ConfigError("data: requires either 'csv' or 'synthetic'");
  }

  const json& syn = obj["synthetic"];
  check_keys(syn, "data.synthetic",
             {"n", "dim", "kernel", "noise_variance", "snr", "seed", "width",
              "input_distribution"});
  const auto n = syn.value("n", Eigen::Index{1000});
  const int dim = syn.value("dim", 1);
  if (n < 5 || dim < 1) throw ConfigError("data.synthetic: bad n or dim");
  if (!syn.contains("kernel")) {
    throw ConfigError("data.synthetic: missing 'kernel'");
  }
  const KernelConfig kc = parse_kernel(syn["kernel"], dim,
                                       "data.synthetic.kernel");
  const Kernel truth(kc.families, kc.lengthscales, kc.signal_variance);
  double noise = kc.noise_variance;
  if (syn.contains("snr")) {
    // SNR v = k(x,x) / sigma^2.
    noise = kc.signal_variance / require_positive(syn["snr"],
                                                  "data.synthetic.snr");
  }
  if (syn.contains("noise_variance")) {
    noise = require_positive(syn["noise_variance"],
                             "data.synthetic.noise_variance");
  }
  const auto seed = syn.value("seed", std::uint64_t{0});
  const double width =
      syn.contains("width")
          ? require_positive(syn["width"], "data.synthetic.width")
          : 6.0 * std::sqrt(static_cast<double>(n) / 2.0);
  const std::string dist = syn.value("input_distribution", "uniform");

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd X(n, dim);
  if (dist == "uniform") {
    std::uniform_real_distribution<double> u(-width / 2.0, width / 2.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < dim; ++d) X(i, d) = u(rng);
    }
  } else if (dist == "gaussian") {
    std::normal_distribution<double> g(0.0, width / 6.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < dim; ++d) X(i, d) = g(rng);
    }
  } else {
    throw ConfigError("data.synthetic.input_distribution must be 'uniform' "
                      "or 'gaussian'");
  }
  out.raw.X = X;
  // Dense Cholesky draws up to the dense limit; spectral draws beyond it.
  out.raw.y = n <= 5000 ? sample_gp_prior(X, truth, noise, seed + 1)
                        : sample_gp_prior_rff(X, truth, noise, seed + 1);
  out.x_columns.clear();
  for (int d = 0; d < dim; ++d) out.x_columns.push_back("x" + std::to_string(d));
  out.resolved["synthetic"]["resolved_noise_variance"] = noise;
  out.resolved["synthetic"]["resolved_width"] = width;
  return out;
}

struct FeaturesConfig {
  int per_dim_count = 0;
  std::optional<Eigen::VectorXd> eps; // nullopt = auto
  GridMask mask = GridMask::full_rectangular;
  std::optional<Eigen::Index> target_pairs;
};

FeaturesConfig parse_features(const json& obj, int dim) {
  check_keys(obj, "features",
             {"per_dim_count", "eps", "mask", "target_pairs"});
  FeaturesConfig out;
  if (!obj.contains("per_dim_count")) {
    throw ConfigError("features: missing 'per_dim_count'");
  }
  out.per_dim_count = obj["per_dim_count"].get<int>();
  if (obj.contains("eps") && !(obj["eps"].is_string())) {
    out.eps = parse_positive_vector(obj["eps"], dim, "features.eps");
  } else if (obj.contains("eps") && obj["eps"].is_string() &&
             obj["eps"] != "auto") {
    throw ConfigError("features.eps must be 'auto', a number, or an array");
  }
  if (obj.contains("mask")) {
    out.mask = grid_mask_from_string(obj["mask"]);
  }
  if (obj.contains("target_pairs")) {
    out.target_pairs = obj["target_pairs"].get<Eigen::Index>();
  }
  return out;
}

OptConfig parse_optimizer(const json& root, const CommonFlags& flags) {
  OptConfig opt;
  if (root.contains("optimizer")) {
    const json& obj = root["optimizer"];
    check_keys(obj, "optimizer",
               {"max_iters", "tol", "grad_tol", "restarts", "seed",
                "chunk_size", "fd_step", "dense_limit"});
    opt.max_iters = obj.value("max_iters", opt.max_iters);
    opt.tol = obj.value("tol", opt.tol);
    opt.grad_tol = obj.value("grad_tol", opt.grad_tol);
    opt.restarts = obj.value("restarts", opt.restarts);
    opt.seed = obj.value("seed", opt.seed);
    opt.chunk_size = obj.value("chunk_size", opt.chunk_size);
    opt.fd_step = obj.value("fd_step", opt.fd_step);
    opt.dense_limit = obj.value("dense_limit", opt.dense_limit);
    if (opt.max_iters < 0 || !(opt.tol > 0.0)) {
      throw ConfigError("optimizer: bad max_iters or tol");
    }
  }
  if (flags.seed) opt.seed = *flags.seed;
  opt.threads = flags.threads;
  return opt;
}

json params_to_json(const HyperParams& params) {
  json out;
  out["log_lengthscales"] =
      std::vector<double>(params.log_lengthscales.begin(),
                          params.log_lengthscales.end());
  out["log_signal_variance"] = params.log_signal_variance;
  out["log_noise_variance"] = params.log_noise_variance;
  std::vector<double> ls(params.log_lengthscales.size());
  for (size_t i = 0; i < ls.size(); ++i) {
    ls[i] = std::exp(params.log_lengthscales[static_cast<Eigen::Index>(i)]);
  }
  out["lengthscales"] = ls;
  out["signal_variance"] = std::exp(params.log_signal_variance);
  out["noise_variance"] = params.noise_variance();
  return out;
}

json normalization_to_json(const Normalization& norm) {
  json out;
  out["x_shift"] = std::vector<double>(norm.x_shift.begin(), norm.x_shift.end());
  out["x_scale"] = std::vector<double>(norm.x_scale.begin(), norm.x_scale.end());
  out["y_shift"] = norm.y_shift;
  out["y_scale"] = norm.y_scale;
  return out;
}

Normalization normalization_from_json(const json& obj) {
  Normalization norm;
  const auto xs = obj.at("x_shift").get<std::vector<double>>();
  const auto xc = obj.at("x_scale").get<std::vector<double>>();
  norm.x_shift = Eigen::Map<const Eigen::VectorXd>(xs.data(),
                                                   static_cast<Eigen::Index>(xs.size()));
  norm.x_scale = Eigen::Map<const Eigen::VectorXd>(xc.data(),
                                                   static_cast<Eigen::Index>(xc.size()));
  norm.y_shift = obj.at("y_shift").get<double>();
  norm.y_scale = obj.at("y_scale").get<double>();
  return norm;
}

std::string hash_to_hex(std::uint64_t hash) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

void write_json(const json& value, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open output file " + path.string());
  out << value.dump(2) << "\n";
}

std::filesystem::path resolve_output(const std::filesystem::path& outdir,
                                     const std::string& name) {
  std::filesystem::path p(name);
  if (p.is_absolute()) return p;
  std::filesystem::create_directories(outdir);
  return outdir / p;
}

/// Summary via the cache directory when given: the file is keyed by the
/// provenance hash, so a stale entry simply misses and is recomputed.
std::pair<DataSummary, double> obtain_summary(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
    const FrequencyGrid& grid, const OptConfig& opt,
    const std::optional<std::filesystem::path>& cache_dir) {
  const std::uint64_t hash = provenance_hash(X, y, grid);
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    const auto path = *cache_dir / (hash_to_hex(hash) + ".summary");
    if (std::filesystem::exists(path)) {
      const auto tick = Clock::now();
      try {
        DataSummary summary = load_summary(path, hash);
        return {std::move(summary), seconds_since(tick)};
      } catch (const Error&) {
        // Corrupt or stale entry: fall through to recompute.
      }
    }
    const auto tick = Clock::now();
    DataSummary summary =
        compute_summaries(X, y, grid, opt.chunk_size, opt.threads);
    const double elapsed = seconds_since(tick);
    save_summary(summary, path);
    return {std::move(summary), elapsed};
  }
  const auto tick = Clock::now();
  DataSummary summary =
      compute_summaries(X, y, grid, opt.chunk_size, opt.threads);
  return {std::move(summary), seconds_since(tick)};
}

} // namespace

void cmd_fit(const std::filesystem::path& config_path,
             const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config",
             {"data", "kernel", "features", "method", "inducing_count",
              "optimizer", "output"});
  if (!config.contains("data") || !config.contains("kernel") ||
      !config.contains("method") || !config.contains("output")) {
    throw ConfigError("config: 'data', 'kernel', 'method' and 'output' are "
                      "required");
  }

  DataConfig data = parse_data(config["data"]);
  const int dim = data.raw.dim();
  const KernelConfig kernel_config =
      parse_kernel(config["kernel"], dim, "kernel");
  const FitMethod method = fit_method_from_string(config["method"]);
  OptConfig opt = parse_optimizer(config, flags);

  check_keys(config["output"], "output", {"report", "model"});
  if (!config["output"].contains("report")) {
    throw ConfigError("output: missing 'report'");
  }

  SplitResult split =
      normalize_split(data.raw, data.train_fraction, data.split_seed);

  HyperParams init;
  init.log_lengthscales = kernel_config.lengthscales.array().log();
  init.log_signal_variance = std::log(kernel_config.signal_variance);
  init.log_noise_variance = std::log(kernel_config.noise_variance);

  ModelConfig model;
  model.method = method;
  model.families = kernel_config.families;
  model.density = kernel_config.density;
  model.init = init;

  json resolved = config;
  resolved["data"] = data.resolved;
  resolved["data"]["resolved_n"] = data.raw.size();
  resolved["data"]["resolved_dim"] = dim;

  DataSummary summary;
  double precompute_seconds = 0.0;
  FrequencyGrid grid;
  if (method == FitMethod::iff) {
    if (!config.contains("features")) {
      throw ConfigError("config: iff method requires a 'features' section");
    }
    const FeaturesConfig feats = parse_features(config["features"], dim);
    const Eigen::VectorXd eps =
        feats.eps ? *feats.eps : default_epsilon(split.train.X);
    grid = build_grid(feats.per_dim_count, eps, dim, feats.mask,
                      feats.target_pairs);
    model.grid = grid;
    resolved["features"]["eps"] =
        std::vector<double>(eps.begin(), eps.end());
    std::tie(summary, precompute_seconds) =
        obtain_summary(split.train.X, split.train.y, grid, opt,
                       flags.cache_dir);
  } else if (method == FitMethod::sgpr_kmeans) {
    if (!config.contains("inducing_count")) {
      throw ConfigError("config: sgpr_kmeans requires 'inducing_count'");
    }
    model.inducing_count = config["inducing_count"].get<int>();
  }

  const auto fit_tick = Clock::now();
  FitReport report =
      method == FitMethod::iff
          ? fit(split.train, model, opt, &summary, precompute_seconds)
          : fit(split.train, model, opt);
  const double total_seconds = seconds_since(fit_tick) +
                               (method == FitMethod::iff
                                    ? precompute_seconds
                                    : 0.0);

  // Test metrics at the learned parameters.
  json metrics_json;
  const Kernel learned = report.final_params.kernel(model.families);
  const double learned_noise = report.final_params.noise_variance();
  if (split.test.size() > 0) {
    PredictiveMarginals pred;
    if (method == FitMethod::iff) {
      const SpectralDensity density =
          model.density == DensityProvenance::closed_form
              ? SpectralDensity::closed_form(learned)
              : SpectralDensity::dft_numeric(learned);
      const KuuDiag kuu = kuu_diag(grid, density);
      const VariationalState state = optimal_qu(kuu, summary, learned_noise);
      pred = sparse_predict(state, kuu, feature_matrix(grid, split.test.X),
                            learned, split.test.X);
    } else if (method == FitMethod::sgpr_kmeans) {
      const Eigen::MatrixXd Z =
          kmeans(split.train.X, model.inducing_count, opt.seed);
      const Eigen::MatrixXd Kuu = kernel_gram(learned, Z);
      const Eigen::MatrixXd Kuf = kernel_cross(learned, Z, split.train.X);
      const VariationalState state =
          optimal_qu(Kuu, Kuf, split.train.y, learned_noise);
      pred = sparse_predict(state, Kuu,
                            kernel_cross(learned, Z, split.test.X), learned,
                            split.test.X);
    } else {
      pred = exact_predict(split.train.X, split.train.y, learned,
                           learned_noise, split.test.X, opt.dense_limit);
    }
    const Metrics m =
        metrics(pred, split.test.y, split.normalization, learned_noise);
    metrics_json["rmse"] = m.rmse;
    metrics_json["nlpd"] = m.nlpd;
  }

  json report_json;
  report_json["config"] = resolved;
  report_json["method"] = to_string(method);
  report_json["final_params"] = params_to_json(report.final_params);
  report_json["final_objective"] = report.final_objective;
  json trace = json::array();
  for (const auto& [step, value] : report.objective_trace) {
    trace.push_back(json::array({step, value}));
  }
  report_json["objective_trace"] = trace;
  report_json["precompute_seconds"] = report.precompute_seconds;
  report_json["per_step_seconds"] = report.per_step_seconds;
  report_json["total_seconds"] = total_seconds;
  report_json["converged"] = report.converged;
  report_json["restarts_used"] = report.restarts_used;
  report_json["trace_clamp_events"] = report.trace_clamp_events;
  report_json["normalization"] = normalization_to_json(split.normalization);
  report_json["split_seed"] = data.split_seed;
  report_json["train_fraction"] = data.train_fraction;
  if (!metrics_json.is_null()) report_json["metrics"] = metrics_json;
  if (split.empty_test_warning) {
    report_json["warnings"] = json::array({"empty test set"});
  }

  write_json(report_json,
             resolve_output(flags.outdir, config["output"]["report"]));

  if (config["output"].contains("model")) {
    const auto model_path =
        resolve_output(flags.outdir, config["output"]["model"]);
    json model_json;
    model_json["format"] = "iffgp-model";
    model_json["version"] = 1;
    model_json["method"] = to_string(method);
    json kernel_json;
    std::vector<std::string> family_names;
    for (const auto family : model.families) {
      family_names.push_back(to_string(family));
    }
    kernel_json["families"] = family_names;
    kernel_json["density"] = model.density == DensityProvenance::closed_form
                                 ? "closed_form"
                                 : "dft_numeric";
    model_json["kernel"] = kernel_json;
    model_json["params"] = params_to_json(report.final_params);
    model_json["normalization"] = normalization_to_json(split.normalization);
    model_json["x_columns"] = data.x_columns;
    if (method == FitMethod::iff) {
      json grid_json;
      grid_json["eps"] = std::vector<double>(grid.eps.begin(), grid.eps.end());
      grid_json["per_dim_count"] = grid.per_dim_count;
      grid_json["mask"] = to_string(grid.mask);
      json freqs = json::array();
      for (Eigen::Index m = 0; m < grid.pair_count(); ++m) {
        json z = json::array();
        for (Eigen::Index d = 0; d < grid.dim(); ++d) {
          z.push_back(grid.half_frequencies(m, d));
        }
        freqs.push_back(z);
      }
      grid_json["half_frequencies"] = freqs;
      model_json["grid"] = grid_json;
      model_json["provenance_hash"] = hash_to_hex(summary.provenance_hash);
      const auto summary_path = model_path.string() + ".summary";
      save_summary(summary, summary_path);
      model_json["summary_file"] =
          std::filesystem::path(summary_path).filename().string();
    }
    write_json(model_json, model_path);
  }
}

void cmd_predict(const std::filesystem::path& model_path,
                 const std::filesystem::path& input_csv,
                 const std::filesystem::path& output_csv,
                 const CommonFlags& flags) {
  (void)flags;
  const json model = load_json(model_path);
  if (model.value("format", "") != "iffgp-model") {
    throw FormatError("predict: not a model file: " + model_path.string());
  }
  if (model.value("method", "") != "iff") {
    throw ConfigError("predict: only iff models support prediction from a "
                      "saved model file");
  }

  std::vector<KernelFamily> families;
  for (const auto& name : model.at("kernel").at("families")) {
    families.push_back(kernel_family_from_string(name));
  }
  const int dim = static_cast<int>(families.size());

  HyperParams params;
  const json& pj = model.at("params");
  const auto lls = pj.at("log_lengthscales").get<std::vector<double>>();
  params.log_lengthscales = Eigen::Map<const Eigen::VectorXd>(
      lls.data(), static_cast<Eigen::Index>(lls.size()));
  params.log_signal_variance = pj.at("log_signal_variance").get<double>();
  params.log_noise_variance = pj.at("log_noise_variance").get<double>();

  const Normalization norm =
      normalization_from_json(model.at("normalization"));

  FrequencyGrid grid;
  const json& gj = model.at("grid");
  const auto eps = gj.at("eps").get<std::vector<double>>();
  grid.eps = Eigen::Map<const Eigen::VectorXd>(
      eps.data(), static_cast<Eigen::Index>(eps.size()));
  grid.per_dim_count = gj.at("per_dim_count").get<int>();
  grid.mask = grid_mask_from_string(gj.at("mask"));
  const auto& freqs = gj.at("half_frequencies");
  grid.half_frequencies.resize(static_cast<Eigen::Index>(freqs.size()), dim);
  for (size_t m = 0; m < freqs.size(); ++m) {
    for (int d = 0; d < dim; ++d) {
      grid.half_frequencies(static_cast<Eigen::Index>(m), d) =
          freqs[m][static_cast<size_t>(d)].get<double>();
    }
  }

  std::uint64_t expected_hash = 0;
  {
    std::istringstream in(model.at("provenance_hash").get<std::string>());
    in >> std::hex >> expected_hash;
  }
  const auto summary_path =
      model_path.parent_path() / model.at("summary_file").get<std::string>();
  const DataSummary summary = load_summary(summary_path, expected_hash);

  const auto x_columns = model.at("x_columns").get<std::vector<std::string>>();
  if (static_cast<int>(x_columns.size()) != dim) {
    throw SchemaError("predict: model column list does not match dimension");
  }

  // Header-only inputs are allowed here: the output is then header-only too.
  const Dataset inputs = load_csv_inputs(input_csv, x_columns);
  const bool empty_input = inputs.X.rows() == 0;

  std::ofstream out(output_csv);
  if (!out) {
    throw FormatError("predict: cannot open output " + output_csv.string());
  }
  out << std::setprecision(17);
  for (const auto& name : x_columns) out << name << ",";
  out << "mean,variance\n";
  if (empty_input) return;

  const Kernel kernel = params.kernel(families);
  const double noise = params.noise_variance();
  const std::string density_kind =
      model.at("kernel").value("density", "closed_form");
  const SpectralDensity density = density_kind == "closed_form"
                                      ? SpectralDensity::closed_form(kernel)
                                      : SpectralDensity::dft_numeric(kernel);
  const KuuDiag kuu = kuu_diag(grid, density);
  const VariationalState state = optimal_qu(kuu, summary, noise);

  const Eigen::MatrixXd x_norm = norm.apply_x(inputs.X);
  const PredictiveMarginals pred = sparse_predict(
      state, kuu, feature_matrix(grid, x_norm), kernel, x_norm);

  for (Eigen::Index i = 0; i < inputs.X.rows(); ++i) {
    for (int d = 0; d < dim; ++d) out << inputs.X(i, d) << ",";
    const double mean_un = pred.mean[i] * norm.y_scale + norm.y_shift;
    const double var_un =
        (pred.variance[i] + noise) * norm.y_scale * norm.y_scale;
    out << mean_un << "," << var_un << "\n";
  }
}

void cmd_sample(const std::filesystem::path& config_path,
                const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config", {"data", "output"});
  if (!config.contains("data") || !config.contains("output")) {
    throw ConfigError("sample: config requires 'data' and 'output'");
  }
  check_keys(config["output"], "output", {"samples"});
  if (!config["output"].contains("samples")) {
    throw ConfigError("sample: output requires 'samples'");
  }
  DataConfig data = parse_data(config["data"]);

  const auto path =
      resolve_output(flags.outdir, config["output"]["samples"]);
  std::ofstream out(path);
  if (!out) throw FormatError("sample: cannot open " + path.string());
  out << std::setprecision(17);
  for (const auto& name : data.x_columns) out << name << ",";
  out << "y\n";
  for (Eigen::Index i = 0; i < data.raw.size(); ++i) {
    for (int d = 0; d < data.raw.dim(); ++d) out << data.raw.X(i, d) << ",";
    out << data.raw.y[i] << "\n";
  }
}

void cmd_gap_curve(const std::filesystem::path& config_path,
                   const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config",
             {"data", "kernel", "gap_curve", "optimizer", "output"});
  DataConfig data = parse_data(config.at("data"));
  const int dim = data.raw.dim();
  const KernelConfig kc = parse_kernel(config.at("kernel"), dim, "kernel");
  const json& gc = config.at("gap_curve");
  check_keys(gc, "gap_curve", {"per_dim_counts", "eps"});

  SplitResult split =
      normalize_split(data.raw, data.train_fraction, data.split_seed);

  GapCurveConfig curve;
  curve.per_dim_counts = gc.at("per_dim_counts").get<std::vector<int>>();
  if (gc.contains("eps") && !gc["eps"].is_string()) {
    curve.eps = parse_positive_vector(gc["eps"], dim, "gap_curve.eps");
  }
  curve.families = kc.families;
  curve.opt = parse_optimizer(config, flags);

  HyperParams init;
  init.log_lengthscales = kc.lengthscales.array().log();
  init.log_signal_variance = std::log(kc.signal_variance);
  init.log_noise_variance = std::log(kc.noise_variance);

  const auto rows = gap_curve(split.train, curve);

  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& row : rows) {
    std::ostringstream a, b, c, d, e;
    a << row.feature_count;
    b << std::setprecision(17) << row.gap_per_n;
    c << std::setprecision(17) << row.objective;
    d << std::setprecision(17) << row.log_marginal;
    e << std::setprecision(17) << row.wall_seconds;
    const std::string status = !row.error.empty() ? row.error
                               : row.bound_flag   ? "bound-slack"
                                                  : "ok";
    csv_rows.push_back({a.str(), b.str(), c.str(), d.str(), e.str(), status});
  }
  const std::vector<std::string> columns{
      "features", "gap_per_n", "objective", "log_marginal", "wall_seconds",
      "status"};
  write_csv(flags.outdir, "gap_curve", columns, csv_rows);
  write_manifest(flags.outdir,
                 {{"gap_curve", columns, csv_rows.size(), curve.opt.seed}});
}

void cmd_eps_sweep(const std::filesystem::path& config_path,
                   const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config", {"data", "kernel", "eps_sweep", "output"});
  DataConfig data = parse_data(config.at("data"));
  const KernelConfig kc =
      parse_kernel(config.at("kernel"), data.raw.dim(), "kernel");
  const json& sweep = config.at("eps_sweep");
  check_keys(sweep, "eps_sweep", {"m_eps", "eps_wx", "dense_limit"});

  SplitResult split =
      normalize_split(data.raw, data.train_fraction, data.split_seed);
  const Kernel kernel(kc.families, kc.lengthscales, kc.signal_variance);

  const auto rows = epsilon_sweep(
      split.train, kernel, kc.noise_variance,
      sweep.at("m_eps").get<std::vector<double>>(),
      sweep.at("eps_wx").get<std::vector<double>>(),
      sweep.value("dense_limit", Eigen::Index{5000}));

  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& row : rows) {
    std::ostringstream a, b, c, d, e;
    a << std::setprecision(17) << row.m_eps;
    b << std::setprecision(17) << row.eps_wx;
    c << std::setprecision(17) << row.eps;
    d << row.per_dim_count;
    e << std::setprecision(17) << row.gap_per_n;
    const std::string status = !row.error.empty() ? row.error
                               : row.bound_flag   ? "bound-slack"
                                                  : "ok";
    csv_rows.push_back({a.str(), b.str(), c.str(), d.str(), e.str(),
                        row.at_default ? "1" : "0", status});
  }
  const std::vector<std::string> columns{
      "m_eps", "eps_wx", "eps", "features", "gap_per_n", "at_default",
      "status"};
  write_csv(flags.outdir, "eps_sweep", columns, csv_rows);
  write_manifest(flags.outdir,
                 {{"eps_sweep", columns, csv_rows.size(), data.split_seed}});
}

void cmd_rate_check(const std::filesystem::path& config_path,
                    const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config", {"kernel", "rate_check", "output"});
  const KernelConfig kc = parse_kernel(config.at("kernel"), 1, "kernel");
  const json& rc = config.at("rate_check");
  check_keys(rc, "rate_check", {"q", "feature_counts", "eps0", "sigma2"});

  const Kernel kernel(kc.families, kc.lengthscales, kc.signal_variance);
  const auto result = rate_check(
      kernel, rc.value("sigma2", 1.0), rc.at("q").get<double>(),
      rc.at("feature_counts").get<std::vector<int>>(),
      rc.value("eps0", 0.5));

  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& row : result.rows) {
    std::ostringstream a, b, c;
    a << row.feature_count;
    b << std::setprecision(17) << row.eps;
    c << std::setprecision(17) << row.t_hat_norm;
    csv_rows.push_back({a.str(), b.str(), c.str(),
                        row.excluded ? "excluded" : "ok"});
  }
  const std::vector<std::string> columns{"features", "eps", "t_hat_norm",
                                         "status"};
  write_csv(flags.outdir, "rate_check", columns, csv_rows);
  write_manifest(flags.outdir, {{"rate_check", columns, csv_rows.size(), 0}});

  json summary;
  summary["fitted_slope"] = result.fitted_slope;
  summary["predicted_slope"] = result.predicted_slope;
  write_json(summary, flags.outdir / "rate_check_summary.json");
}

void cmd_timing(const std::filesystem::path& config_path,
                const CommonFlags& flags) {
  const json config = load_json(config_path);
  check_keys(config, "config", {"timing", "output"});
  const json& tc = config.at("timing");
  check_keys(tc, "timing",
             {"n_values", "feature_count", "method", "steps", "repetitions",
              "seed", "dense_limit"});

  TimingConfig timing;
  timing.n_values.clear();
  for (const auto& n : tc.at("n_values")) {
    timing.n_values.push_back(n.get<Eigen::Index>());
  }
  timing.feature_count = tc.value("feature_count", 200);
  timing.method = fit_method_from_string(tc.value("method", "iff"));
  timing.steps = tc.value("steps", 5);
  timing.repetitions = tc.value("repetitions", 5);
  timing.seed = tc.value("seed", std::uint64_t{0});
  timing.dense_limit = tc.value("dense_limit", Eigen::Index{5000});

  const auto rows = timing_harness(timing);

  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& row : rows) {
    std::ostringstream a, b, c;
    a << row.n;
    b << std::setprecision(17) << row.precompute_seconds;
    c << std::setprecision(17) << row.mean_step_seconds;
    csv_rows.push_back(
        {a.str(), b.str(), c.str(), row.error.empty() ? "ok" : row.error});
  }
  const std::vector<std::string> columns{"n", "precompute_seconds",
                                         "mean_step_seconds", "status"};
  write_csv(flags.outdir, "timing", columns, csv_rows);
  write_manifest(flags.outdir, {{"timing", columns, csv_rows.size(),
                                 timing.seed}});
}

int run(const std::vector<std::string>& args) {
  try {
    if (args.empty()) {
      std::cerr << "usage: iffgp <fit|predict|sample|gap-curve|eps-sweep|"
                   "rate-check|timing> [args] [flags]\n";
      return 1;
    }
    CommonFlags flags;
    std::vector<std::string> positional;
    for (size_t i = 0; i < args.size(); ++i) {
      const std::string& arg = args[i];
      auto next = [&]() -> std::string {
        if (i + 1 >= args.size()) {
          throw ConfigError("missing value for flag " + arg);
        }
        return args[++i];
      };
      if (arg == "--cache-dir") {
        flags.cache_dir = next();
      } else if (arg == "--outdir") {
        flags.outdir = next();
      } else if (arg == "--seed") {
        flags.seed = std::stoull(next());
      } else if (arg == "--threads") {
        flags.threads = std::stoi(next());
        if (flags.threads < 1) throw ConfigError("--threads must be >= 1");
      } else if (arg.rfind("--", 0) == 0) {
        throw ConfigError("unknown flag " + arg);
      } else {
        positional.push_back(arg);
      }
    }
    if (positional.empty()) throw ConfigError("missing subcommand");
    const std::string command = positional[0];
    auto need = [&](size_t count) {
      if (positional.size() != count + 1) {
        throw ConfigError("command '" + command + "' takes " +
                          std::to_string(count) + " positional argument(s)");
      }
    };
    if (command == "fit") {
      need(1);
      cmd_fit(positional[1], flags);
    } else if (command == "predict") {
      need(3);
      cmd_predict(positional[1], positional[2], positional[3], flags);
    } else if (command == "sample") {
      need(1);
      cmd_sample(positional[1], flags);
    } else if (command == "gap-curve") {
      need(1);
      cmd_gap_curve(positional[1], flags);
    } else if (command == "eps-sweep") {
      need(1);
      cmd_eps_sweep(positional[1], flags);
    } else if (command == "rate-check") {
      need(1);
      cmd_rate_check(positional[1], flags);
    } else if (command == "timing") {
      need(1);
      cmd_timing(positional[1], flags);
    } else {
      throw ConfigError("unknown subcommand '" + command + "'");
    }
    return 0;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateSpectrum& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateTail& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

} // namespace iffgp::cli
