#ifndef GFMM_IO_HPP
#define GFMM_IO_HPP

#include <cstring>
#include <fstream>

#include "gfmm/oracle.hpp"

namespace gfmm {

// Binary layouts (all little-endian):
//   matrix file:   "GFMM" | u32 version | u64 n        | n*n f64, column-major
//   points file:   "GPTS" | u32 version | u64 n | u64 d | n*d f64, point-major
//   neighbor dump: "GNNT" | u32 version | u64 n | u64 k | per index k * (u64 j, f64 d)
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

inline void write_raw(std::ofstream& f, const void* p, size_t bytes) {
  f.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  if (!f) throw io_error("write failed");
}

inline void read_raw(std::ifstream& f, void* p, size_t bytes, const char* what) {
  f.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (f.gcount() != static_cast<std::streamsize>(bytes))
    throw io_error(std::string("truncated file while reading ") + what);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for reading: " + path);
  return f;
}

inline void check_magic(std::ifstream& f, const char expect[4], const std::string& path) {
  char magic[4];
  read_raw(f, magic, 4, "magic");
  if (std::memcmp(magic, expect, 4) != 0)
    throw io_error("bad magic in " + path + " (expected " + std::string(expect, 4) + ")");
  std::uint32_t version;
  read_raw(f, &version, 4, "version");
  if (version != kFormatVersion)
    throw io_error("unsupported format version in " + path);
}

}  // namespace detail

inline void write_matrix_file(const std::string& path, const Matrix& k) {
  if (k.rows() != k.cols()) throw std::invalid_argument("matrix file requires a square matrix");
  auto f = detail::open_out(path);
  detail::write_raw(f, "GFMM", 4);
  detail::write_raw(f, &kFormatVersion, 4);
  std::uint64_t n = static_cast<std::uint64_t>(k.rows());
  detail::write_raw(f, &n, 8);
  detail::write_raw(f, k.data(), sizeof(double) * n * n);
}

inline Matrix read_matrix_file(const std::string& path) {
  auto f = detail::open_in(path);
  detail::check_magic(f, "GFMM", path);
  std::uint64_t n = 0;
  detail::read_raw(f, &n, 8, "n");
  if (n == 0 || n > static_cast<std::uint64_t>(kDeskScaleCap))
    throw io_error("matrix size out of range in " + path);
  Matrix k(n, n);
  detail::read_raw(f, k.data(), sizeof(double) * n * n, "entries");
  double scale = k.cwiseAbs().maxCoeff();
  double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(scale, 1.0))
    throw io_error("matrix in " + path + " is not symmetric");
  return k;
}

inline std::unique_ptr<EntryOracle> file_oracle(const std::string& path) {
  return std::make_unique<DenseOracle>(read_matrix_file(path));
}

inline void write_points_file(const std::string& path, const PointCloud& pc) {
  auto f = detail::open_out(path);
  detail::write_raw(f, "GPTS", 4);
  detail::write_raw(f, &kFormatVersion, 4);
  std::uint64_t n = static_cast<std::uint64_t>(pc.size());
  std::uint64_t d = static_cast<std::uint64_t>(pc.dim());
  detail::write_raw(f, &n, 8);
  detail::write_raw(f, &d, 8);
  // coords is d x n column-major, which is exactly point-major on disk.
  detail::write_raw(f, pc.coords.data(), sizeof(double) * n * d);
}

inline PointCloud read_points_file(const std::string& path) {
  auto f = detail::open_in(path);
  detail::check_magic(f, "GPTS", path);
  std::uint64_t n = 0, d = 0;
  detail::read_raw(f, &n, 8, "n");
  detail::read_raw(f, &d, 8, "d");
  if (n == 0 || d == 0 || n > 100'000'000ULL / std::max<std::uint64_t>(d, 1))
    throw io_error("point count out of range in " + path);
  PointCloud pc;
  pc.coords.resize(d, n);
  detail::read_raw(f, pc.coords.data(), sizeof(double) * n * d, "coordinates");
  if (!pc.coords.allFinite()) throw io_error("non-finite coordinates in " + path);
  return pc;
}

}  // namespace gfmm

#endif  // GFMM_IO_HPP
