#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iffgp/errors.hpp"

namespace iffgp::cli {

struct CommonFlags {
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path outdir = ".";
  std::optional<std::uint64_t> seed; // overrides optimizer.seed
  int threads = 1;
};

/// Runs a fit described by a JSON config; writes the fit report and model
/// files named in the config's output section (relative to outdir).
void cmd_fit(const std::filesystem::path& config_path,
             const CommonFlags& flags);

/// Predicts at the inputs of a CSV file using a saved model; writes the
/// input columns plus mean and variance (observation scale, unnormalized).
void cmd_predict(const std::filesystem::path& model_path,
                 const std::filesystem::path& input_csv,
                 const std::filesystem::path& output_csv,
                 const CommonFlags& flags);

/// Generates a synthetic dataset CSV from a config.
void cmd_sample(const std::filesystem::path& config_path,
                const CommonFlags& flags);

void cmd_gap_curve(const std::filesystem::path& config_path,
                   const CommonFlags& flags);
void cmd_eps_sweep(const std::filesystem::path& config_path,
                   const CommonFlags& flags);
void cmd_rate_check(const std::filesystem::path& config_path,
                    const CommonFlags& flags);
void cmd_timing(const std::filesystem::path& config_path,
                const CommonFlags& flags);

/// Full argv-style entry point; maps errors to exit codes
/// (0 ok, 1 config/schema/format, 2 numerical).
int run(const std::vector<std::string>& args);

} // namespace iffgp::cli
