#ifndef GFMM_ORACLE_HPP
#define GFMM_ORACLE_HPP

#include <atomic>
#include <memory>

#include "gfmm/common.hpp"

namespace gfmm {

/// Point set backing the kernel generators. Stored one point per column.
struct PointCloud {
  Matrix coords;  // d x n

  int dim() const { return static_cast<int>(coords.rows()); }
  int size() const { return static_cast<int>(coords.cols()); }

  static PointCloud random_gaussian(int n, int d, std::uint64_t seed) {
    PointCloud pc;
    pc.coords.resize(d, n);
    Rng rng(seed, 0x9f);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < d; ++i) pc.coords(i, j) = rng.gauss();
    return pc;
  }

  void validate() const {
    if (!coords.allFinite()) throw std::invalid_argument("point cloud has non-finite coordinates");
  }
};

/// Entry-evaluation interface to an SPD matrix. Implementations are
/// read-only after construction and safe to call from multiple threads.
class EntryOracle {
 public:
  virtual ~EntryOracle() = default;

  virtual int size() const = 0;

  /// Fill out (|I| x |J|) with K_IJ.
  virtual void eval_block(std::span<const int> I, std::span<const int> J,
                          Matrix& out) const = 0;

  virtual Vector eval_diag(std::span<const int> I) const {
    Vector d(I.size());
    Matrix cell(1, 1);
    for (size_t t = 0; t < I.size(); ++t) {
      int i = I[t];
      eval_block({&i, 1}, {&i, 1}, cell);
      d[t] = cell(0, 0);
    }
    return d;
  }

  Matrix block(std::span<const int> I, std::span<const int> J) const {
    Matrix out;
    eval_block(I, J, out);
    return out;
  }

  double entry(int i, int j) const {
    Matrix cell(1, 1);
    eval_block({&i, 1}, {&j, 1}, cell);
    return cell(0, 0);
  }
};

/// Decorator that counts served entries; used by compress() for the
/// entries_evaluated statistic.
class CountingOracle final : public EntryOracle {
 public:
  explicit CountingOracle(const EntryOracle& inner) : inner_(inner) {}

  int size() const override { return inner_.size(); }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    count_.fetch_add(static_cast<long long>(I.size()) * J.size(),
                     std::memory_order_relaxed);
    inner_.eval_block(I, J, out);
  }

  Vector eval_diag(std::span<const int> I) const override {
    count_.fetch_add(static_cast<long long>(I.size()), std::memory_order_relaxed);
    return inner_.eval_diag(I);
  }

  long long entries() const { return count_.load(); }

 private:
  const EntryOracle& inner_;
  mutable std::atomic<long long> count_{0};
};

/// Fully materialized matrix. Backs the file oracle and the stencil/random
/// generators, which are built once and then served from storage.
class DenseOracle final : public EntryOracle {
 public:
  explicit DenseOracle(Matrix k) : k_(std::move(k)) {
    if (k_.rows() != k_.cols()) throw std::invalid_argument("dense oracle requires a square matrix");
  }

  int size() const override { return static_cast<int>(k_.rows()); }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    out.resize(I.size(), J.size());
    for (size_t c = 0; c < J.size(); ++c)
      for (size_t r = 0; r < I.size(); ++r) out(r, c) = k_(I[r], J[c]);
  }

  Vector eval_diag(std::span<const int> I) const override {
    Vector d(I.size());
    for (size_t t = 0; t < I.size(); ++t) d[t] = k_(I[t], I[t]);
    return d;
  }

  const Matrix& matrix() const { return k_; }

 private:
  Matrix k_;
};

namespace detail {

class KernelOracleBase : public EntryOracle {
 public:
  explicit KernelOracleBase(PointCloud points) : points_(std::move(points)) {
    points_.validate();
  }
  int size() const override { return points_.size(); }
  const PointCloud& points() const { return points_; }

 protected:
  PointCloud points_;
};

}  // namespace detail

/// K_ij = exp(-|x_i - x_j|^2 / (2 h^2)). Unit diagonal.
class GaussianKernelOracle final : public detail::KernelOracleBase {
 public:
  GaussianKernelOracle(PointCloud points, double bandwidth)
      : KernelOracleBase(std::move(points)), h_(bandwidth) {
    if (!(bandwidth > 0)) throw std::invalid_argument("gaussian bandwidth must be positive");
  }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    out.resize(I.size(), J.size());
    const double inv = 1.0 / (2.0 * h_ * h_);
    for (size_t c = 0; c < J.size(); ++c) {
      auto xj = points_.coords.col(J[c]);
      for (size_t r = 0; r < I.size(); ++r) {
        double d2 = (points_.coords.col(I[r]) - xj).squaredNorm();
        out(r, c) = std::exp(-d2 * inv);
      }
    }
  }

  Vector eval_diag(std::span<const int> I) const override {
    return Vector::Ones(I.size());
  }

 private:
  double h_;
};

/// Green's-function style kernel K_ij = 1 / max(r, delta)^(d-2) with a
/// distance floor delta. delta = 0 with coincident points is singular.
class LaplaceKernelOracle final : public detail::KernelOracleBase {
 public:
  LaplaceKernelOracle(PointCloud points, double regularization)
      : KernelOracleBase(std::move(points)), delta_(regularization) {
    if (regularization < 0) throw std::invalid_argument("laplace regularization must be >= 0");
  }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    out.resize(I.size(), J.size());
    const double p = points_.dim() - 2;
    for (size_t c = 0; c < J.size(); ++c) {
      auto xj = points_.coords.col(J[c]);
      for (size_t r = 0; r < I.size(); ++r) {
        double d = (points_.coords.col(I[r]) - xj).norm();
        double rr = std::max(d, delta_);
        if (rr <= 0.0)
          throw numeric_error("laplace kernel: zero distance with delta=0");
        out(r, c) = std::pow(rr, -p);
      }
    }
  }

  double regularization() const { return delta_; }

 private:
  double delta_;
};

/// K_ij = (x_i' x_j + c)^p.
class PolynomialKernelOracle final : public detail::KernelOracleBase {
 public:
  PolynomialKernelOracle(PointCloud points, double shift, int degree)
      : KernelOracleBase(std::move(points)), c_(shift), p_(degree) {
    if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
  }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    out.resize(I.size(), J.size());
    for (size_t c = 0; c < J.size(); ++c) {
      auto xj = points_.coords.col(J[c]);
      for (size_t r = 0; r < I.size(); ++r) {
        double ip = points_.coords.col(I[r]).dot(xj);
        out(r, c) = std::pow(ip + c_, p_);
      }
    }
  }

 private:
  double c_;
  int p_;
};

/// K_ij = x_i' x_j / (|x_i| |x_j|) + ridge [i == j]. Raw cosine similarity
/// is only PSD, so a small diagonal ridge keeps it strictly SPD.
class CosineKernelOracle final : public detail::KernelOracleBase {
 public:
  CosineKernelOracle(PointCloud points, double ridge = 1e-8)
      : KernelOracleBase(std::move(points)), ridge_(ridge) {
    if (ridge < 0) throw std::invalid_argument("cosine ridge must be >= 0");
    norms_.resize(points_.size());
    for (int j = 0; j < points_.size(); ++j) {
      norms_[j] = points_.coords.col(j).norm();
      if (norms_[j] <= 0.0)
        throw std::invalid_argument("cosine kernel: zero-norm point");
    }
  }

  void eval_block(std::span<const int> I, std::span<const int> J,
                  Matrix& out) const override {
    out.resize(I.size(), J.size());
    for (size_t c = 0; c < J.size(); ++c) {
      auto xj = points_.coords.col(J[c]);
      for (size_t r = 0; r < I.size(); ++r) {
        double v = points_.coords.col(I[r]).dot(xj) / (norms_[I[r]] * norms_[J[c]]);
        if (I[r] == J[c]) v += ridge_;
        out(r, c) = v;
      }
    }
  }

 private:
  double ridge_;
  Vector norms_;
};

inline std::unique_ptr<EntryOracle> gaussian_kernel_oracle(PointCloud points, double bandwidth) {
  return std::make_unique<GaussianKernelOracle>(std::move(points), bandwidth);
}

inline std::unique_ptr<EntryOracle> laplace_kernel_oracle(PointCloud points, double regularization) {
  return std::make_unique<LaplaceKernelOracle>(std::move(points), regularization);
}

inline std::unique_ptr<EntryOracle> polynomial_kernel_oracle(PointCloud points, double shift, int degree) {
  return std::make_unique<PolynomialKernelOracle>(std::move(points), shift, degree);
}

inline std::unique_ptr<EntryOracle> cosine_kernel_oracle(PointCloud points, double ridge = 1e-8) {
  return std::make_unique<CosineKernelOracle>(std::move(points), ridge);
}

/// Distance-floor default for the Laplace kernel: 1e-3 times the median
/// pairwise distance of a 100-point sample.
inline double default_laplace_floor(const PointCloud& points, std::uint64_t seed = 0) {
  Rng rng(seed, 0x1ap1);
  int n = points.size();
  IndexList sample = rng.sample_without_replacement(n, std::min(n, 100));
  std::vector<double> dists;
  for (size_t a = 0; a < sample.size(); ++a)
    for (size_t b = a + 1; b < sample.size(); ++b)
      dists.push_back((points.coords.col(sample[a]) - points.coords.col(sample[b])).norm());
  if (dists.empty()) return 1e-3;
  auto mid = dists.begin() + dists.size() / 2;
  std::nth_element(dists.begin(), mid, dists.end());
  return 1e-3 * *mid;
}

/// K = (L + shift I)^-2 with L the 5-point 2D Dirichlet Laplacian on a
/// grid_side x grid_side grid. Materialized once; O(N^3) build.
inline std::unique_ptr<EntryOracle> inverse_sq_laplacian_oracle(int grid_side, double shift) {
  if (grid_side < 1) throw std::invalid_argument("grid_side must be >= 1");
  long long n = static_cast<long long>(grid_side) * grid_side;
  if (n > kDeskScaleCap)
    throw io_error("inverse_sq_laplacian: N = " + std::to_string(n) +
                   " exceeds desk-scale cap " + std::to_string(kDeskScaleCap));
  if (!(shift > 0)) throw std::invalid_argument("shift must be positive");
  int N = static_cast<int>(n);
  Matrix m = Matrix::Zero(N, N);
  auto id = [&](int r, int c) { return r * grid_side + c; };
  for (int r = 0; r < grid_side; ++r) {
    for (int c = 0; c < grid_side; ++c) {
      int i = id(r, c);
      m(i, i) = 4.0 + shift;
      if (r > 0) m(i, id(r - 1, c)) = -1.0;
      if (r + 1 < grid_side) m(i, id(r + 1, c)) = -1.0;
      if (c > 0) m(i, id(r, c - 1)) = -1.0;
      if (c + 1 < grid_side) m(i, id(r, c + 1)) = -1.0;
    }
  }
  Matrix m2 = m * m;
  Matrix k = m2.llt().solve(Matrix::Identity(N, N));
  // Solver output is symmetric only up to roundoff; symmetrize so repeated
  // (i,j)/(j,i) queries agree exactly.
  k = ((k + k.transpose()) / 2.0).eval();
  return std::make_unique<DenseOracle>(std::move(k));
}

/// K = A'A/n + I with A i.i.d. standard normal. Bounded conditioning.
inline std::unique_ptr<EntryOracle> random_spd_oracle(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (n > kDeskScaleCap)
    throw io_error("random_spd: N exceeds desk-scale cap");
  Rng rng(seed, 0x5bd);
  Matrix a(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = rng.gauss();
  Matrix k = (a.transpose() * a) / static_cast<double>(n);
  k += Matrix::Identity(n, n);
  k = ((k + k.transpose()) / 2.0).eval();
  return std::make_unique<DenseOracle>(std::move(k));
}

}  // namespace gfmm

#endif  // GFMM_ORACLE_HPP
