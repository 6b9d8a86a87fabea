#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>

#include "iffgp/errors.hpp"
#include "iffgp/features.hpp"

namespace iffgp {

/// Hyperparameter-independent data summaries: nu2 = sum y_n^2,
/// ybar = K_uf y, phi = K_uf K_uf^T. Computed once per (X, y, grid) with
/// O(N M^2) cost; every objective evaluation afterwards is O(M^3).
struct DataSummary {
  double nu2 = 0.0;
  Eigen::VectorXd ybar;  // M
  Eigen::MatrixXd phi;   // M x M, symmetric PSD
  std::int64_t n = 0;
  std::uint64_t provenance_hash = 0;

  Eigen::Index feature_count() const { return ybar.size(); }
};

/// FNV-1a digest of (X, y, grid) used to detect stale caches.
std::uint64_t provenance_hash(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const FrequencyGrid& grid);

/// Accumulates the summaries over row chunks. Chunks are reduced in
/// ascending index order so results are reproducible; with `threads` > 1,
/// contiguous chunk ranges are mapped to workers and the per-worker
/// partials are still reduced in ascending range order.
DataSummary compute_summaries(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const FrequencyGrid& grid,
                              Eigen::Index chunk_size = 10000,
                              int threads = 1);

/// Number of compute_summaries invocations in this process
/// (instrumentation for the precompute-once contract).
std::int64_t compute_summaries_invocations();

/// Binary cache: 8-byte magic, version byte, feature count, row count,
/// nu2, ybar, phi row-major (all little-endian float64), provenance hash.
/// Round trips are bit exact.
void save_summary(const DataSummary& summary,
                  const std::filesystem::path& path);

/// Loads a summary and verifies the stored hash equals `expected_hash`;
/// throws StaleCache on mismatch and FormatError on corrupt files.
DataSummary load_summary(const std::filesystem::path& path,
                         std::uint64_t expected_hash);

} // namespace iffgp
