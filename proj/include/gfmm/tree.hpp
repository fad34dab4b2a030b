#ifndef GFMM_TREE_HPP
#define GFMM_TREE_HPP

#include <deque>

#include "gfmm/metric.hpp"

namespace gfmm {

// Centroid sample size for pivot selection.
inline constexpr int kCentroidSample = 32;

struct TreeNode {
  int id = -1;
  int parent = -1;
  int left = -1;   // child node ids, -1 at leaves
  int right = -1;
  int level = 0;
  int start = 0;   // [start, end) in the permuted ordering
  int end = 0;
  int pivot_p = -1;  // original indices of the split pivots, -1 if none/fallback
  int pivot_q = -1;
  std::uint64_t path = 1;  // heap path id (root 1, children 2p / 2p+1)

  bool is_leaf() const { return left < 0; }
  int count() const { return end - start; }
};

/// Balanced binary metric ball tree. Owns the induced permutation:
/// perm[old] = new position, iperm[new] = old index. Leaf ranges are
/// contiguous and partition [0, N).
struct MetricTree {
  std::vector<TreeNode> nodes;  // breadth-first order, id == position
  IndexList perm;
  IndexList iperm;
  std::vector<int> leaf_ids;    // left-to-right
  int leaf_size = 0;
  int depth = 0;

  int size() const { return static_cast<int>(perm.size()); }

  IndexList node_indices(int id) const {
    const TreeNode& nd = nodes[id];
    return IndexList(iperm.begin() + nd.start, iperm.begin() + nd.end);
  }
};

struct SplitResult {
  IndexList left, right;
  int p = -1, q = -1;
  bool fallback = false;
};

namespace detail {

// Split positions [0, n) by the score vector, stable in the current order.
// Left receives ceil(n/2).
inline void median_split_positions(std::span<const double> s, IndexList& lpos, IndexList& rpos) {
  int n = static_cast<int>(s.size());
  std::vector<std::pair<double, int>> order(n);
  for (int i = 0; i < n; ++i) order[i] = {s[i], i};
  int lsize = n - n / 2;
  std::nth_element(order.begin(), order.begin() + lsize, order.end());
  lpos.resize(lsize);
  rpos.resize(n - lsize);
  for (int i = 0; i < lsize; ++i) lpos[i] = order[i].second;
  for (int i = lsize; i < n; ++i) rpos[i - lsize] = order[i].second;
  std::sort(lpos.begin(), lpos.end());
  std::sort(rpos.begin(), rpos.end());
}

inline SplitResult even_split_fallback(std::span<const int> idx) {
  SplitResult r;
  r.fallback = true;
  int n = static_cast<int>(idx.size());
  int lsize = n - n / 2;
  r.left.assign(idx.begin(), idx.begin() + lsize);
  r.right.assign(idx.begin() + lsize, idx.end());
  return r;
}

inline SplitResult split_by_pivots(std::span<const int> idx, const Metric& metric,
                                   int p, int q) {
  int n = static_cast<int>(idx.size());
  std::vector<double> dp(n), dq(n), s(n);
  metric.distances_from(p, idx, dp);
  metric.distances_from(q, idx, dq);
  for (int i = 0; i < n; ++i) s[i] = dp[i] - dq[i];
  // When every non-pivot score ties, the pivots carry no geometry
  // (equidistant configuration); keep the current order instead.
  bool seen = false, all_tie = true;
  double first = 0.0;
  for (int i = 0; i < n; ++i) {
    if (idx[i] == p || idx[i] == q) continue;
    if (!seen) {
      first = s[i];
      seen = true;
    } else if (s[i] != first) {
      all_tie = false;
      break;
    }
  }
  if (seen && all_tie) return even_split_fallback(idx);
  IndexList lpos, rpos;
  median_split_positions(s, lpos, rpos);
  SplitResult r;
  r.p = p;
  r.q = q;
  r.left.reserve(lpos.size());
  r.right.reserve(rpos.size());
  for (int t : lpos) r.left.push_back(idx[t]);
  for (int t : rpos) r.right.push_back(idx[t]);
  return r;
}

// Argmax with ties broken toward the smallest original index.
inline int argmax_index(std::span<const int> idx, std::span<const double> d) {
  int best = 0;
  for (size_t i = 1; i < idx.size(); ++i)
    if (d[i] > d[best] || (d[i] == d[best] && idx[i] < idx[best])) best = static_cast<int>(i);
  return best;
}

}  // namespace detail

/// Pivot-based split: p is farthest from a sampled centroid, q farthest
/// from p, and indices are divided at the median of d_ip - d_iq.
inline SplitResult metric_split(std::span<const int> idx, const Metric& metric, Rng& rng) {
  int n = static_cast<int>(idx.size());
  if (n < 2) throw std::invalid_argument("metric_split requires at least 2 indices");

  std::vector<double> dc(n);
  bool have_centroid = false;
  for (int attempt = 0; attempt < 4 && !have_centroid; ++attempt) {
    IndexList pos = rng.sample_without_replacement(n, std::min(kCentroidSample, n));
    IndexList sample(pos.size());
    for (size_t t = 0; t < pos.size(); ++t) sample[t] = idx[pos[t]];
    try {
      Metric::Centroid c = metric.centroid(sample);
      metric.distances_to_centroid(idx, c, dc);
      have_centroid = true;
    } catch (const degenerate_centroid&) {
      // fresh sample
    }
  }
  if (!have_centroid) return detail::even_split_fallback(idx);

  int p = idx[detail::argmax_index(idx, dc)];
  std::vector<double> dp(n);
  metric.distances_from(p, idx, dp);
  if (*std::max_element(dp.begin(), dp.end()) == 0.0)
    return detail::even_split_fallback(idx);  // all duplicates in this metric
  int q = idx[detail::argmax_index(idx, dp)];
  return detail::split_by_pivots(idx, metric, p, q);
}

/// Same division rule with uniformly random pivots; used by the ANN trees.
inline SplitResult randomized_split(std::span<const int> idx, const Metric& metric, Rng& rng) {
  int n = static_cast<int>(idx.size());
  if (n < 2) throw std::invalid_argument("randomized_split requires at least 2 indices");
  for (int attempt = 0; attempt < 8; ++attempt) {
    int a = rng.uniform(n);
    int b = rng.uniform(n - 1);
    if (b >= a) ++b;
    int p = idx[a], q = idx[b];
    if (metric(p, q) > 0.0) return detail::split_by_pivots(idx, metric, p, q);
  }
  return detail::even_split_fallback(idx);
}

namespace detail {

template <typename SplitFn>
MetricTree build_tree_impl(const Metric& metric, int m, std::uint64_t seed, SplitFn&& split) {
  int n = metric.size();
  if (n < 1) throw std::invalid_argument("tree requires N >= 1");
  if (m < 1) throw std::invalid_argument("leaf size must be >= 1");

  MetricTree tree;
  tree.leaf_size = m;
  tree.iperm.resize(n);
  for (int i = 0; i < n; ++i) tree.iperm[i] = i;

  TreeNode root;
  root.id = 0;
  root.start = 0;
  root.end = n;
  tree.nodes.push_back(root);

  std::deque<int> queue{0};
  while (!queue.empty()) {
    int id = queue.front();
    queue.pop_front();
    TreeNode& nd = tree.nodes[id];
    if (nd.count() <= m) continue;

    Rng rng(seed, splitmix64(nd.path));
    std::span<int> range(tree.iperm.data() + nd.start, nd.count());
    SplitResult sp = split(std::span<const int>(range), metric, rng);
    std::copy(sp.left.begin(), sp.left.end(), range.begin());
    std::copy(sp.right.begin(), sp.right.end(), range.begin() + sp.left.size());

    int mid = nd.start + static_cast<int>(sp.left.size());
    TreeNode lc, rc;
    lc.parent = rc.parent = id;
    lc.level = rc.level = nd.level + 1;
    lc.start = nd.start;
    lc.end = mid;
    rc.start = mid;
    rc.end = nd.end;
    lc.path = nd.path * 2;
    rc.path = nd.path * 2 + 1;
    lc.id = static_cast<int>(tree.nodes.size());
    rc.id = lc.id + 1;

    tree.nodes[id].left = lc.id;
    tree.nodes[id].right = rc.id;
    tree.nodes[id].pivot_p = sp.p;
    tree.nodes[id].pivot_q = sp.q;
    tree.nodes.push_back(lc);
    tree.nodes.push_back(rc);
    queue.push_back(lc.id);
    queue.push_back(rc.id);
  }

  tree.perm.resize(n);
  for (int t = 0; t < n; ++t) tree.perm[tree.iperm[t]] = t;
  for (const TreeNode& nd : tree.nodes) {
    tree.depth = std::max(tree.depth, nd.level);
    if (nd.is_leaf()) tree.leaf_ids.push_back(nd.id);
  }
  std::sort(tree.leaf_ids.begin(), tree.leaf_ids.end(),
            [&](int a, int b) { return tree.nodes[a].start < tree.nodes[b].start; });
  return tree;
}

}  // namespace detail

inline MetricTree build_tree(const Metric& metric, int m, std::uint64_t seed) {
  return detail::build_tree_impl(metric, m, seed,
      [](std::span<const int> idx, const Metric& me, Rng& rng) { return metric_split(idx, me, rng); });
}

inline MetricTree build_random_tree(const Metric& metric, int m, std::uint64_t seed) {
  return detail::build_tree_impl(metric, m, seed,
      [](std::span<const int> idx, const Metric& me, Rng& rng) { return randomized_split(idx, me, rng); });
}

/// One line per node: `node_id level start end p q`.
inline void dump_tree(std::ostream& os, const MetricTree& tree) {
  for (const TreeNode& nd : tree.nodes)
    os << nd.id << ' ' << nd.level << ' ' << nd.start << ' ' << nd.end << ' '
       << nd.pivot_p << ' ' << nd.pivot_q << '\n';
}

}  // namespace gfmm

#endif  // GFMM_TREE_HPP
