#ifndef GFMM_NEIGHBORS_HPP
#define GFMM_NEIGHBORS_HPP

#include <fstream>
#include <limits>

#include "gfmm/tree.hpp"

namespace gfmm {

/// Per-index approximate nearest neighbor lists, ascending by
/// (distance, index). An index never appears in its own list. Lists are
/// not symmetric and callers must not assume they are.
struct NeighborTable {
  int k = 0;
  std::vector<std::vector<std::pair<int, double>>> lists;  // (j, d_ij)

  static NeighborTable empty(int n, int kappa) {
    NeighborTable t;
    t.k = std::min(kappa, n - 1);
    t.lists.resize(n);
    return t;
  }

  int size() const { return static_cast<int>(lists.size()); }
};

namespace detail {

inline bool neighbor_less(const std::pair<int, double>& a, const std::pair<int, double>& b) {
  if (a.second != b.second) return a.second < b.second;
  return a.first < b.first;
}

// Merge sorted candidates into a sorted list, keep the k smallest by
// (distance, index), drop duplicates. Existing entries never get worse.
inline void merge_candidates(std::vector<std::pair<int, double>>& list,
                             std::vector<std::pair<int, double>>& cand, int k) {
  std::sort(cand.begin(), cand.end(), neighbor_less);
  std::vector<std::pair<int, double>> merged;
  merged.reserve(std::min<size_t>(k, list.size() + cand.size()));
  size_t a = 0, b = 0;
  int last = -1;
  while (static_cast<int>(merged.size()) < k && (a < list.size() || b < cand.size())) {
    const std::pair<int, double>* next;
    if (b >= cand.size() || (a < list.size() && neighbor_less(list[a], cand[b])))
      next = &list[a++];
    else
      next = &cand[b++];
    if (next->first == last) continue;
    // duplicate indices carry identical distances, so (d, j) order makes
    // them adjacent except when both sources hold the same j; scan guard:
    bool dup = false;
    for (auto it = merged.rbegin(); it != merged.rend() && it->second == next->second; ++it)
      if (it->first == next->first) { dup = true; break; }
    if (dup) continue;
    merged.push_back(*next);
    last = next->first;
  }
  list = std::move(merged);
}

}  // namespace detail

/// Exact k-nearest-neighbor reference by full pairwise evaluation.
inline NeighborTable brute_force_neighbors(const Metric& metric, int kappa) {
  int n = metric.size();
  if (n > kDeskScaleCap) throw io_error("brute_force_neighbors: N exceeds desk-scale cap");
  NeighborTable table = NeighborTable::empty(n, kappa);
  for (int i = 0; i < n; ++i) {
    IndexList all(n);
    for (int j = 0; j < n; ++j) all[j] = j;
    std::vector<double> d(n);
    metric.distances_from(i, all, d);
    std::vector<std::pair<int, double>> cand;
    cand.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(j, d[j]);
    std::sort(cand.begin(), cand.end(), detail::neighbor_less);
    cand.resize(std::min<size_t>(cand.size(), table.k));
    table.lists[i] = std::move(cand);
  }
  return table;
}

/// One pass of the randomized-tree search: build a tree with random
/// pivots, run exhaustive search inside each leaf, merge candidates.
inline void ann_iteration(NeighborTable& table, const Metric& metric, int m,
                          std::uint64_t seed, int threads = 1) {
  MetricTree tree = build_random_tree(metric, m, seed);
  int nleaves = static_cast<int>(tree.leaf_ids.size());
  parallel_for(0, nleaves, threads, [&](int li) {
    IndexList leaf = tree.node_indices(tree.leaf_ids[li]);
    Matrix d = metric.pairwise(leaf);
    int ln = static_cast<int>(leaf.size());
    std::vector<std::pair<int, double>> cand;
    for (int a = 0; a < ln; ++a) {
      cand.clear();
      cand.reserve(ln - 1);
      for (int b = 0; b < ln; ++b)
        if (b != a) cand.emplace_back(leaf[b], d(a, b));
      // each index belongs to exactly one leaf, so writes are disjoint
      detail::merge_candidates(table.lists[leaf[a]], cand, table.k);
    }
  });
}

struct AnnResult {
  NeighborTable table;
  std::vector<double> recall_per_iteration;  // empty entries are NaN-free; see ann_search
};

/// Iterated randomized-tree search with per-iteration recall estimated
/// against brute force on a small uniform sample of indices.
/// recall_sample == 0 skips the estimate (reported as NaN).
inline AnnResult ann_search(const Metric& metric, int kappa, int m, int iterations,
                            std::uint64_t seed, int recall_sample = 10, int threads = 1) {
  if (iterations < 1) throw std::invalid_argument("ann_search requires iterations >= 1");
  int n = metric.size();
  AnnResult res;
  res.table = NeighborTable::empty(n, kappa);

  IndexList probe;
  std::vector<std::vector<int>> exact_sets;
  if (recall_sample > 0) {
    Rng rng(seed, 0x7ec411);
    probe = rng.sample_without_replacement(n, std::min(recall_sample, n));
    for (int i : probe) {
      IndexList all(n);
      for (int j = 0; j < n; ++j) all[j] = j;
      std::vector<double> d(n);
      metric.distances_from(i, all, d);
      std::vector<std::pair<int, double>> cand;
      for (int j = 0; j < n; ++j)
        if (j != i) cand.emplace_back(j, d[j]);
      std::sort(cand.begin(), cand.end(), detail::neighbor_less);
      std::vector<int> ids;
      for (int t = 0; t < res.table.k; ++t) ids.push_back(cand[t].first);
      std::sort(ids.begin(), ids.end());
      exact_sets.push_back(std::move(ids));
    }
  }

  for (int it = 0; it < iterations; ++it) {
    ann_iteration(res.table, metric, m, splitmix64(seed) + it, threads);
    if (probe.empty()) {
      res.recall_per_iteration.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    long long hit = 0, total = 0;
    for (size_t t = 0; t < probe.size(); ++t) {
      const auto& exact = exact_sets[t];
      for (const auto& [j, d] : res.table.lists[probe[t]])
        if (std::binary_search(exact.begin(), exact.end(), j)) ++hit;
      total += exact.size();
    }
    res.recall_per_iteration.push_back(total ? static_cast<double>(hit) / total : 1.0);
  }
  return res;
}

/// Binary dump: "GNNT" | u32 version | u64 n | u64 k | per index k pairs.
inline void write_neighbor_file(const std::string& path, const NeighborTable& table) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open for writing: " + path);
  auto put = [&](const void* p, size_t bytes) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  };
  std::uint32_t version = 1;
  put("GNNT", 4);
  put(&version, 4);
  std::uint64_t n = table.lists.size(), k = table.k;
  put(&n, 8);
  put(&k, 8);
  for (const auto& list : table.lists) {
    if (list.size() != static_cast<size_t>(table.k))
      throw io_error("neighbor table incomplete; run more iterations before dumping");
    for (const auto& [j, d] : list) {
      std::uint64_t jj = static_cast<std::uint64_t>(j);
      put(&jj, 8);
      put(&d, 8);
    }
  }
  if (!f) throw io_error("write failed: " + path);
}

}  // namespace gfmm

#endif  // GFMM_NEIGHBORS_HPP
