#ifndef GFMM_COMMON_HPP
#define GFMM_COMMON_HPP

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace gfmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<int>;

// Largest N for which dense materialization (generators, brute-force
// references) is allowed.
inline constexpr int kDeskScaleCap = 16384;

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown by the Angle centroid when the sampled Gram-space mean collapses;
// callers retry with a fresh sample.
struct degenerate_centroid : numeric_error {
  using numeric_error::numeric_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hand-rolled generator so that streams are identical across standard
// library implementations. Keyed streams (seed, stream id) make parallel
// construction order-independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform in [0, n). Modulo bias is irrelevant at desk scale.
  int uniform(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // k distinct values from [0, n), ascending.
  IndexList sample_without_replacement(int n, int k) {
    IndexList out;
    if (k >= n) {
      out.resize(n);
      for (int i = 0; i < n; ++i) out[i] = i;
      return out;
    }
    std::vector<bool> taken(n, false);
    out.reserve(k);
    while (static_cast<int>(out.size()) < k) {
      int v = uniform(n);
      if (!taken[v]) {
        taken[v] = true;
        out.push_back(v);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Static partition so the work assignment (and therefore any per-chunk
// rounding behavior) does not depend on scheduling. Each chunk writes
// disjoint state.
template <typename F>
void parallel_for(int begin, int end, int threads, F&& body) {
  int n = end - begin;
  if (n <= 0) return;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([=, &body] {
      for (int i = begin + t; i < end; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gfmm

#endif  // GFMM_COMMON_HPP
