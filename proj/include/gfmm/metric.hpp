#ifndef GFMM_METRIC_HPP
#define GFMM_METRIC_HPP

#include "gfmm/oracle.hpp"

namespace gfmm {

enum class DistanceKind { GeometricL2, KernelL2, Angle };

inline const char* to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::GeometricL2: return "geom";
    case DistanceKind::KernelL2: return "kernel";
    case DistanceKind::Angle: return "angle";
  }
  return "?";
}

/// Index-pair distances computed from matrix entries (or coordinates for
/// the geometric kind). Caches the diagonal so a pairwise distance costs a
/// single off-diagonal entry. Read-only after construction.
class Metric {
 public:
  Metric(DistanceKind kind, const EntryOracle& oracle, const PointCloud* points = nullptr)
      : kind_(kind), oracle_(&oracle), points_(points) {
    if (kind == DistanceKind::GeometricL2 && points == nullptr)
      throw std::invalid_argument("geometric distance requires a point cloud");
    IndexList all(oracle.size());
    for (int i = 0; i < oracle.size(); ++i) all[i] = i;
    diag_ = oracle.eval_diag(all);
  }

  DistanceKind kind() const { return kind_; }
  int size() const { return oracle_->size(); }
  const EntryOracle& oracle() const { return *oracle_; }
  double diagonal(int i) const { return diag_[i]; }

  double operator()(int i, int j) const {
    if (i == j) return 0.0;
    if (kind_ == DistanceKind::GeometricL2)
      return (points_->coords.col(i) - points_->coords.col(j)).norm();
    return from_entry(i, j, oracle_->entry(i, j));
  }

  /// Distances from index i to every index in J.
  void distances_from(int i, std::span<const int> J, std::span<double> out) const {
    if (kind_ == DistanceKind::GeometricL2) {
      for (size_t t = 0; t < J.size(); ++t)
        out[t] = (points_->coords.col(i) - points_->coords.col(J[t])).norm();
      return;
    }
    Matrix row = oracle_->block({&i, 1}, J);
    for (size_t t = 0; t < J.size(); ++t)
      out[t] = (J[t] == i) ? 0.0 : from_entry(i, J[t], row(0, t));
  }

  /// Full |I| x |I| distance matrix, amortizing one block evaluation.
  Matrix pairwise(std::span<const int> I) const {
    size_t n = I.size();
    Matrix d(n, n);
    if (kind_ == DistanceKind::GeometricL2) {
      for (size_t b = 0; b < n; ++b)
        for (size_t a = 0; a < n; ++a)
          d(a, b) = (points_->coords.col(I[a]) - points_->coords.col(I[b])).norm();
      return d;
    }
    Matrix k = oracle_->block(I, I);
    for (size_t b = 0; b < n; ++b)
      for (size_t a = 0; a < n; ++a)
        d(a, b) = (I[a] == I[b]) ? 0.0 : from_entry(I[a], I[b], k(a, b));
    return d;
  }

  /// Sampled centroid, reusable across many distance queries. Holds only
  /// entry sums; Gram vectors are never materialized.
  struct Centroid {
    IndexList sample;
    double self = 0.0;     // |c|^2 = (1/nc^2) sum_{s,t} K_st (Gram kinds)
    Vector mean;           // coordinate mean (geometric kind)
  };

  Centroid centroid(std::span<const int> sample) const {
    if (sample.empty()) throw std::invalid_argument("centroid sample must be nonempty");
    Centroid c;
    c.sample.assign(sample.begin(), sample.end());
    if (kind_ == DistanceKind::GeometricL2) {
      c.mean = Vector::Zero(points_->dim());
      for (int s : sample) c.mean += points_->coords.col(s);
      c.mean /= static_cast<double>(sample.size());
      return c;
    }
    Matrix g = oracle_->block(sample, sample);
    double nc = static_cast<double>(sample.size());
    if (kind_ == DistanceKind::Angle) {
      // Mean of unit Gram vectors, so the centroid (and with it the split
      // pivots) is invariant under K -> DKD diagonal rescaling.
      for (size_t b = 0; b < sample.size(); ++b)
        for (size_t a = 0; a < sample.size(); ++a)
          g(a, b) /= std::sqrt(diag_[sample[a]] * diag_[sample[b]]);
      c.self = g.sum() / (nc * nc);
      if (c.self <= 1e-14)
        throw degenerate_centroid("angle centroid has (near-)zero norm");
      return c;
    }
    c.self = g.sum() / (nc * nc);
    return c;
  }

  double to_centroid(int i, const Centroid& c) const {
    double out;
    distances_to_centroid({&i, 1}, c, {&out, 1});
    return out;
  }

  void distances_to_centroid(std::span<const int> I, const Centroid& c,
                             std::span<double> out) const {
    if (kind_ == DistanceKind::GeometricL2) {
      for (size_t t = 0; t < I.size(); ++t)
        out[t] = (points_->coords.col(I[t]) - c.mean).norm();
      return;
    }
    Matrix cross = oracle_->block(I, c.sample);
    double nc = static_cast<double>(c.sample.size());
    for (size_t t = 0; t < I.size(); ++t) {
      if (kind_ == DistanceKind::KernelL2) {
        double si = cross.row(t).sum();
        double d2 = diag_[I[t]] - 2.0 * si / nc + c.self;
        out[t] = std::sqrt(std::max(0.0, d2));
      } else {
        double si = 0.0;  // normalized, matching the centroid above
        for (size_t s = 0; s < c.sample.size(); ++s)
          si += cross(t, s) / std::sqrt(diag_[I[t]] * diag_[c.sample[s]]);
        double d = 1.0 - (si * si) / (nc * nc * c.self);
        out[t] = std::clamp(d, 0.0, 1.0);
      }
    }
  }

 private:
  double from_entry(int i, int j, double kij) const {
    if (kind_ == DistanceKind::KernelL2) {
      // SPD makes the radicand nonnegative analytically; clamp roundoff.
      return std::sqrt(std::max(0.0, diag_[i] + diag_[j] - 2.0 * kij));
    }
    double d = 1.0 - (kij * kij) / (diag_[i] * diag_[j]);
    return std::clamp(d, 0.0, 1.0);
  }

  DistanceKind kind_;
  const EntryOracle* oracle_;
  const PointCloud* points_;
  Vector diag_;
};

inline double distance(DistanceKind kind, const EntryOracle& oracle,
                       const PointCloud* points, int i, int j) {
  return Metric(kind, oracle, points)(i, j);
}

inline double distance_to_centroid(DistanceKind kind, const EntryOracle& oracle,
                                   const PointCloud* points, int i,
                                   std::span<const int> sample) {
  Metric m(kind, oracle, points);
  return m.to_centroid(i, m.centroid(sample));
}

}  // namespace gfmm

#endif  // GFMM_METRIC_HPP
