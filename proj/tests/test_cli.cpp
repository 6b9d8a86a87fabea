#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "iffgp/cli.hpp"
#include "iffgp/data_io.hpp"

using namespace iffgp;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("iffgp_cli_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  json parsed;
  in >> parsed;
  return parsed;
}

json minimal_fit_config() {
  return json{
      {"data",
       {{"synthetic",
         {{"n", 400},
          {"dim", 1},
          {"seed", 3},
          {"kernel",
           {{"family", "se"},
            {"lengthscales", 1.0},
            {"signal_variance", 1.0},
            {"noise_variance", 0.1}}}}},
        {"train_fraction", 0.8},
        {"split_seed", 1}}},
      {"kernel", {{"family", "se"}}},
      {"features",
       {{"per_dim_count", 64}, {"eps", "auto"}, {"mask", "full_rectangular"}}},
      {"method", "iff"},
      {"optimizer", {{"max_iters", 40}, {"seed", 0}}},
      {"output", {{"report", "report.json"}, {"model", "model.json"}}}};
}

} // namespace

TEST_CASE("fit writes a report and a model") {
  TempDir dir;
  const auto config_path = dir.path / "config.json";
  write_file(config_path, minimal_fit_config().dump(2));

  const int code = cli::run({"fit", config_path.string(), "--outdir",
                             dir.path.string()});
  REQUIRE(code == 0);

  const json report = read_json(dir.path / "report.json");
  CHECK(report.contains("final_params"));
  CHECK(report.contains("metrics"));
  CHECK(report["converged"].is_boolean());
  // The resolved eps value is echoed numerically.
  REQUIRE(report["config"]["features"]["eps"].is_array());
  CHECK(report["config"]["features"]["eps"][0].get<double>() > 0.0);

  const json model = read_json(dir.path / "model.json");
  CHECK(model["format"] == "iffgp-model");
  CHECK(model["method"] == "iff");
  CHECK(std::filesystem::exists(dir.path / "model.json.summary"));
}

TEST_CASE("config validation failures exit with code 1") {
  TempDir dir;

  // Negative lengthscale initialization.
  json bad = minimal_fit_config();
  bad["kernel"]["lengthscales"] = -0.5;
  write_file(dir.path / "bad.json", bad.dump());
  CHECK(cli::run({"fit", (dir.path / "bad.json").string(), "--outdir",
                  dir.path.string()}) == 1);

  // Unknown keys are listed.
  json unknown = minimal_fit_config();
  unknown["optimizer"]["stepsize"] = 0.1;
  unknown["typo_section"] = 1;
  write_file(dir.path / "unknown.json", unknown.dump());
  CHECK(cli::run({"fit", (dir.path / "unknown.json").string(), "--outdir",
                  dir.path.string()}) == 1);

  // Missing file and malformed JSON.
  CHECK(cli::run({"fit", (dir.path / "absent.json").string()}) == 1);
  write_file(dir.path / "broken.json", "{not json");
  CHECK(cli::run({"fit", (dir.path / "broken.json").string()}) == 1);

  // Unknown subcommand/flag.
  CHECK(cli::run({"frobnicate"}) == 1);
  CHECK(cli::run({"fit", "--bogus"}) == 1);
}

TEST_CASE("cache reuse makes the second precompute cheap") {
  TempDir dir;
  json config = minimal_fit_config();
  config["data"]["synthetic"]["n"] = 20000;
  config["features"]["per_dim_count"] = 128;
  config["optimizer"]["max_iters"] = 2;
  write_file(dir.path / "config.json", config.dump());

  const auto cache = dir.path / "cache";
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    (dir.path / "run1").string(), "--cache-dir",
                    cache.string()}) == 0);
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    (dir.path / "run2").string(), "--cache-dir",
                    cache.string()}) == 0);

  const double first =
      read_json(dir.path / "run1" / "report.json")["precompute_seconds"];
  const double second =
      read_json(dir.path / "run2" / "report.json")["precompute_seconds"];
  CHECK(second < 0.1 * first);
}

TEST_CASE("predict round trip") {
  TempDir dir;
  json config = minimal_fit_config();
  config["data"]["synthetic"]["noise_variance"] = 1e-4;
  config["data"]["synthetic"]["n"] = 300;
  config["features"]["per_dim_count"] = 96;
  write_file(dir.path / "config.json", config.dump());
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    dir.path.string()}) == 0);

  // Materialize the same synthetic dataset to predict at training inputs.
  const json report = read_json(dir.path / "report.json");

  // Use the sample subcommand to materialize the same synthetic dataset.
  json sample_config = {{"data", config["data"]},
                        {"output", {{"samples", "data.csv"}}}};
  sample_config["data"].erase("train_fraction");
  sample_config["data"].erase("split_seed");
  write_file(dir.path / "sample.json", sample_config.dump());
  REQUIRE(cli::run({"sample", (dir.path / "sample.json").string(),
                    "--outdir", dir.path.string()}) == 0);

  const int code = cli::run({"predict", (dir.path / "model.json").string(),
                             (dir.path / "data.csv").string(),
                             (dir.path / "pred.csv").string()});
  REQUIRE(code == 0);

  // Near-noiseless fit: predictions at training inputs shadow the targets.
  const Dataset truth = load_csv(dir.path / "data.csv", {"x0"}, "y");
  const Dataset pred = load_csv(dir.path / "pred.csv", {"x0"}, "mean");
  REQUIRE(pred.size() == truth.size());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    worst = std::max(worst, std::abs(pred.y[i] - truth.y[i]));
  }
  CHECK(worst < 0.25);
}

TEST_CASE("predict handles empty inputs and schema errors") {
  TempDir dir;
  json config = minimal_fit_config();
  write_file(dir.path / "config.json", config.dump());
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    dir.path.string()}) == 0);

  // Header-only input produces a header-only output with exit 0.
  write_file(dir.path / "empty.csv", "x0\n");
  CHECK(cli::run({"predict", (dir.path / "model.json").string(),
                  (dir.path / "empty.csv").string(),
                  (dir.path / "empty_out.csv").string()}) == 0);
  std::ifstream out(dir.path / "empty_out.csv");
  std::string line;
  REQUIRE(std::getline(out, line));
  CHECK(line == "x0,mean,variance");
  CHECK_FALSE(std::getline(out, line));

  // Input without the model's columns: schema error.
  write_file(dir.path / "wrong.csv", "a,b\n1,2\n");
  CHECK(cli::run({"predict", (dir.path / "model.json").string(),
                  (dir.path / "wrong.csv").string(),
                  (dir.path / "bad_out.csv").string()}) == 1);

  // Tampered summary cache: stale-cache error.
  {
    std::fstream f(dir.path / "model.json.summary",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(-1, std::ios::end);
    char last = 0;
    f.read(&last, 1);
    f.seekp(-1, std::ios::end);
    last = static_cast<char>(last ^ 0x1);
    f.write(&last, 1);
  }
  write_file(dir.path / "one.csv", "x0\n0.5\n");
  CHECK(cli::run({"predict", (dir.path / "model.json").string(),
                  (dir.path / "one.csv").string(),
                  (dir.path / "one_out.csv").string()}) == 1);
}

TEST_CASE("fit then metrics round trip reproduces the reported metrics") {
  TempDir dir;
  json config = minimal_fit_config();
  write_file(dir.path / "config.json", config.dump());
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    dir.path.string()}) == 0);
  const json report = read_json(dir.path / "report.json");
  REQUIRE(report.contains("metrics"));

  // A second identical fit reproduces the metrics bit for bit.
  REQUIRE(cli::run({"fit", (dir.path / "config.json").string(), "--outdir",
                    (dir.path / "again").string()}) == 0);
  const json report2 = read_json(dir.path / "again" / "report.json");
  CHECK(report["metrics"]["rmse"].get<double>() ==
        doctest::Approx(report2["metrics"]["rmse"].get<double>())
            .epsilon(1e-8));
  CHECK(report["metrics"]["nlpd"].get<double>() ==
        doctest::Approx(report2["metrics"]["nlpd"].get<double>())
            .epsilon(1e-8));
}

TEST_CASE("sgpr and exact fits run end to end") {
  TempDir dir;
  json config = minimal_fit_config();
  config["data"]["synthetic"]["n"] = 200;
  config["method"] = "sgpr_kmeans";
  config["inducing_count"] = 20;
  config.erase("features");
  config["optimizer"]["max_iters"] = 10;
  write_file(dir.path / "sgpr.json", config.dump());
  CHECK(cli::run({"fit", (dir.path / "sgpr.json").string(), "--outdir",
                  (dir.path / "sgpr").string()}) == 0);

  config["method"] = "exact";
  config.erase("inducing_count");
  write_file(dir.path / "exact.json", config.dump());
  CHECK(cli::run({"fit", (dir.path / "exact.json").string(), "--outdir",
                  (dir.path / "exact").string()}) == 0);
  const json report = read_json(dir.path / "exact" / "report.json");
  CHECK(report["metrics"]["rmse"].get<double>() > 0.0);
}

TEST_CASE("diagnostic subcommands write tables and manifests") {
  TempDir dir;

  json gap = {{"data",
               {{"synthetic",
                 {{"n", 200},
                  {"dim", 1},
                  {"seed", 5},
                  {"kernel", {{"family", "se"}, {"lengthscales", 1.0}}}}},
                {"train_fraction", 0.9},
                {"split_seed", 2}}},
              {"kernel", {{"family", "se"}}},
              {"gap_curve", {{"per_dim_counts", {16, 32}}}},
              {"optimizer", {{"max_iters", 8}}},
              {"output", json::object()}};
  write_file(dir.path / "gap.json", gap.dump());
  CHECK(cli::run({"gap-curve", (dir.path / "gap.json").string(), "--outdir",
                  (dir.path / "gap").string()}) == 0);
  CHECK(std::filesystem::exists(dir.path / "gap" / "gap_curve.csv"));
  CHECK(std::filesystem::exists(dir.path / "gap" / "manifest.json"));

  json sweep = {{"data", gap["data"]},
                {"kernel",
                 {{"family", "se"},
                  {"lengthscales", 1.0},
                  {"noise_variance", 1.0}}},
                {"eps_sweep", {{"m_eps", {1.0}}, {"eps_wx", {0.95, 2.0}}}},
                {"output", json::object()}};
  write_file(dir.path / "sweep.json", sweep.dump());
  CHECK(cli::run({"eps-sweep", (dir.path / "sweep.json").string(),
                  "--outdir", (dir.path / "sweep").string()}) == 0);
  CHECK(std::filesystem::exists(dir.path / "sweep" / "eps_sweep.csv"));

  json rate = {{"kernel", {{"family", "matern12"}, {"lengthscales", 1.0}}},
               {"rate_check",
                {{"q", 1.0},
                 {"feature_counts", {64, 128, 256}},
                 {"eps0", 0.5}}},
               {"output", json::object()}};
  write_file(dir.path / "rate.json", rate.dump());
  CHECK(cli::run({"rate-check", (dir.path / "rate.json").string(),
                  "--outdir", (dir.path / "rate").string()}) == 0);
  CHECK(std::filesystem::exists(dir.path / "rate" / "rate_check.csv"));
  CHECK(std::filesystem::exists(dir.path / "rate" /
                                "rate_check_summary.json"));

  json timing = {{"timing",
                  {{"n_values", {500, 1000}},
                   {"feature_count", 32},
                   {"method", "iff"},
                   {"steps", 2},
                   {"repetitions", 2}}},
                 {"output", json::object()}};
  write_file(dir.path / "timing.json", timing.dump());
  CHECK(cli::run({"timing", (dir.path / "timing.json").string(), "--outdir",
                  (dir.path / "timing").string()}) == 0);
  CHECK(std::filesystem::exists(dir.path / "timing" / "timing.csv"));
}

TEST_CASE("iffgp binary subprocess smoke test") {
  TempDir dir;
  json config = minimal_fit_config();
  config["data"]["synthetic"]["n"] = 120;
  config["features"]["per_dim_count"] = 32;
  config["optimizer"]["max_iters"] = 5;
  write_file(dir.path / "config.json", config.dump());

  std::ostringstream ok_cmd;
  ok_cmd << IFFGP_CLI_BINARY << " fit " << (dir.path / "config.json")
         << " --outdir " << dir.path << " > /dev/null 2>&1";
  CHECK(std::system(ok_cmd.str().c_str()) == 0);
  CHECK(std::filesystem::exists(dir.path / "report.json"));

  std::ostringstream bad_cmd;
  bad_cmd << IFFGP_CLI_BINARY << " fit " << (dir.path / "absent.json")
          << " > /dev/null 2>&1";
  const int status = std::system(bad_cmd.str().c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
}
