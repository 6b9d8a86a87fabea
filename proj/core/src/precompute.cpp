#include "iffgp/precompute.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "cache format assumes a little-endian host");

namespace iffgp {

namespace {

constexpr char kMagic[8] = {'I', 'F', 'F', 'G', 'P', 'S', 'U', 'M'};
constexpr std::uint8_t kVersion = 1;

std::atomic<std::int64_t> g_invocations{0};

struct Fnv1a {
  std::uint64_t state = 14695981039346656037ULL;
  void bytes(const void* data, size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < size; ++i) {
      state ^= p[i];
      state *= 1099511628211ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void matrix(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
    }
  }
};

struct Partial {
  double nu2 = 0.0;
  Eigen::VectorXd ybar;
  Eigen::MatrixXd phi;
};

Partial accumulate_range(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const FrequencyGrid& grid, Eigen::Index chunk_size,
                         Eigen::Index begin, Eigen::Index end) {
  const Eigen::Index m = grid.feature_count();
  Partial partial;
  partial.ybar = Eigen::VectorXd::Zero(m);
  partial.phi = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index start = begin; start < end; start += chunk_size) {
    const Eigen::Index len = std::min(chunk_size, end - start);
    const Eigen::MatrixXd F =
        feature_matrix(grid, X.middleRows(start, len));
    const auto yc = y.segment(start, len);
    partial.nu2 += yc.squaredNorm();
    partial.ybar.noalias() += F * yc;
    partial.phi.noalias() += F * F.transpose();
  }
  return partial;
}

} // namespace

std::uint64_t provenance_hash(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const FrequencyGrid& grid) {
  Fnv1a h;
  h.matrix(X);
  h.u64(static_cast<std::uint64_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) h.f64(y[i]);
  h.u64(static_cast<std::uint64_t>(grid.per_dim_count));
  h.u64(static_cast<std::uint64_t>(grid.mask));
  h.u64(static_cast<std::uint64_t>(grid.eps.size()));
  for (Eigen::Index d = 0; d < grid.eps.size(); ++d) h.f64(grid.eps[d]);
  h.matrix(grid.half_frequencies);
  return h.state;
}

std::int64_t compute_summaries_invocations() { return g_invocations.load(); }

DataSummary compute_summaries(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y,
                              const FrequencyGrid& grid,
                              Eigen::Index chunk_size, int threads) {
  g_invocations.fetch_add(1);
  const Eigen::Index n = X.rows();
  if (n < 1) throw InvalidArgument("compute_summaries: empty dataset");
  if (y.size() != n) {
    throw InvalidArgument("compute_summaries: X/y size mismatch");
  }
  if (chunk_size < 1) {
    throw InvalidArgument("compute_summaries: chunk_size must be >= 1");
  }
  if (X.cols() != grid.dim()) {
    throw InvalidArgument("compute_summaries: input dimension mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!X.row(i).allFinite() || !std::isfinite(y[i])) {
      std::ostringstream msg;
      msg << "compute_summaries: non-finite values in row " << i;
      throw InvalidArgument(msg.str());
    }
  }

  const Eigen::Index num_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(num_chunks)));

  std::vector<Partial> partials(static_cast<size_t>(workers));
  if (workers == 1) {
    partials[0] = accumulate_range(X, y, grid, chunk_size, 0, n);
  } else {
    // Contiguous chunk ranges per worker; reduced in worker order below so
    // the reduction order stays ascending in chunk index.
    const Eigen::Index chunks_per_worker =
        (num_chunks + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index begin =
          std::min<Eigen::Index>(n, w * chunks_per_worker * chunk_size);
      const Eigen::Index end =
          std::min<Eigen::Index>(n, (w + 1) * chunks_per_worker * chunk_size);
      pool.emplace_back([&, w, begin, end]() {
        partials[static_cast<size_t>(w)] =
            accumulate_range(X, y, grid, chunk_size, begin, end);
      });
    }
    for (auto& t : pool) t.join();
  }

  DataSummary summary;
  const Eigen::Index m = grid.feature_count();
  summary.ybar = Eigen::VectorXd::Zero(m);
  summary.phi = Eigen::MatrixXd::Zero(m, m);
  for (const auto& partial : partials) {
    summary.nu2 += partial.nu2;
    summary.ybar += partial.ybar;
    summary.phi += partial.phi;
  }
  summary.phi = 0.5 * (summary.phi + summary.phi.transpose()).eval();
  summary.n = n;
  summary.provenance_hash = provenance_hash(X, y, grid);
  return summary;
}

void save_summary(const DataSummary& summary,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("save_summary: cannot open " + path.string());
  }
  out.write(kMagic, sizeof kMagic);
  out.put(static_cast<char>(kVersion));
  const auto m = static_cast<std::uint64_t>(summary.ybar.size());
  const auto n = static_cast<std::uint64_t>(summary.n);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&summary.nu2), sizeof(double));
  out.write(reinterpret_cast<const char*>(summary.ybar.data()),
            static_cast<std::streamsize>(m * sizeof(double)));
  // Row-major on disk.
  for (std::uint64_t i = 0; i < m; ++i) {
    for (std::uint64_t j = 0; j < m; ++j) {
      const double v = summary.phi(static_cast<Eigen::Index>(i),
                                   static_cast<Eigen::Index>(j));
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  out.write(reinterpret_cast<const char*>(&summary.provenance_hash),
            sizeof summary.provenance_hash);
  if (!out) {
    throw FormatError("save_summary: write failed for " + path.string());
  }
}

DataSummary load_summary(const std::filesystem::path& path,
                         std::uint64_t expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("load_summary: cannot open " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("load_summary: bad magic in " + path.string());
  }
  const int version = in.get();
  if (version != kVersion) {
    throw FormatError("load_summary: unsupported version");
  }
  std::uint64_t m = 0, n = 0;
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || m > (1u << 20)) {
    throw FormatError("load_summary: corrupt header");
  }
  DataSummary summary;
  summary.n = static_cast<std::int64_t>(n);
  in.read(reinterpret_cast<char*>(&summary.nu2), sizeof(double));
  summary.ybar.resize(static_cast<Eigen::Index>(m));
  in.read(reinterpret_cast<char*>(summary.ybar.data()),
          static_cast<std::streamsize>(m * sizeof(double)));
  summary.phi.resize(static_cast<Eigen::Index>(m),
                     static_cast<Eigen::Index>(m));
  for (std::uint64_t i = 0; i < m; ++i) {
    for (std::uint64_t j = 0; j < m; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      summary.phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          v;
    }
  }
  in.read(reinterpret_cast<char*>(&summary.provenance_hash),
          sizeof summary.provenance_hash);
  if (!in) {
    throw FormatError("load_summary: truncated file " + path.string());
  }
  if (summary.provenance_hash != expected_hash) {
    throw StaleCache("load_summary: provenance hash mismatch (stale cache)");
  }
  return summary;
}

} // namespace iffgp
