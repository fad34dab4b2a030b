#ifndef GFMM_COMPRESS_HPP
#define GFMM_COMPRESS_HPP

#include <chrono>
#include <map>
#include <unordered_set>

#include "gfmm/neighbors.hpp"

namespace gfmm {

struct RunConfig {
  int m = 256;            // leaf size
  int s = 256;            // maximum skeleton rank
  double tau = 1e-5;      // adaptive pivot-ratio tolerance
  int kappa = 32;         // neighbors per index
  double budget = 0.03;   // direct-evaluation fraction of N^2
  DistanceKind kind = DistanceKind::KernelL2;
  std::uint64_t seed = 0;
  int r = 1;              // right-hand-side columns
  int ann_iterations = 10;
  int threads = 1;

  void validate() const {
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (s < 1 || s > m) throw std::invalid_argument("s must satisfy 1 <= s <= m");
    if (!(tau > 0)) throw std::invalid_argument("tau must be positive");
    if (kappa < 0) throw std::invalid_argument("kappa must be >= 0");
    if (budget < 0 || budget > 1) throw std::invalid_argument("budget must be in [0, 1]");
    if (r < 1) throw std::invalid_argument("r must be >= 1");
    if (ann_iterations < 1) throw std::invalid_argument("ann iterations must be >= 1");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  }
};

/// Interpolative basis of one tree node. skel holds original matrix
/// indices; proj (|skel| x |candidates|) reproduces all candidate columns
/// from the skeleton columns.
struct Skeleton {
  int node_id = -1;
  IndexList skel;
  Matrix proj;
  double achieved_tol = 0.0;

  int rank() const { return static_cast<int>(skel.size()); }
  bool valid() const { return node_id >= 0; }
};

struct CompressStats {
  long long entries_evaluated = 0;
  long long compress_flops = 0;
  long long near_field_entries = 0;  // counts both symmetric applications
  double compress_seconds = 0.0;
  double tree_seconds = 0.0;
  std::vector<double> ann_recall;
  int max_skeleton = 0;
  double mean_skeleton = 0.0;
  bool degraded = false;
};

/// Hierarchical representation: leaf diagonal blocks (D), budgeted direct
/// leaf pairs (S) and skeleton couplings over admissible node pairs (UV).
/// Off-diagonal blocks are stored once with a < b and applied
/// symmetrically, so the operator is symmetric by construction.
struct HMatrix {
  MetricTree tree;
  RunConfig config;
  int n = 0;

  std::vector<Matrix> leaf_diag;   // indexed by node id, empty off-leaves
  struct Block {
    int a = -1, b = -1;            // node ids, a < b
    Matrix k;
  };
  std::vector<Block> near_field;   // leaf pairs, K_{alpha,beta}
  std::vector<Skeleton> skeletons; // indexed by node id; root stays invalid
  std::vector<Block> far_field;    // admissible pairs, K_{skel(a),skel(b)}
  CompressStats stats;
};

/// Greedy neighbor-count selection of direct leaf pairs under the entry
/// budget. Returns leaf node id pairs (a < b). Zero-score pairs are only
/// admitted when the budget covers every off-diagonal pair outright
/// (the exact-evaluation limit).
inline std::vector<std::pair<int, int>> select_near_field(const MetricTree& tree,
                                                          const NeighborTable& table,
                                                          double budget) {
  int nl = static_cast<int>(tree.leaf_ids.size());
  int n = tree.size();
  std::vector<std::pair<int, int>> out;
  if (nl < 2 || budget <= 0.0) return out;

  // leaf ordinal of each original index
  std::vector<int> leaf_of(n);
  for (int li = 0; li < nl; ++li) {
    const TreeNode& nd = tree.nodes[tree.leaf_ids[li]];
    for (int t = nd.start; t < nd.end; ++t) leaf_of[tree.iperm[t]] = li;
  }

  auto pair_cost = [&](int a, int b) {
    return 2LL * tree.nodes[tree.leaf_ids[a]].count() * tree.nodes[tree.leaf_ids[b]].count();
  };
  double cap = budget * static_cast<double>(n) * static_cast<double>(n);

  long long total_all = 0;
  for (int a = 0; a < nl; ++a)
    for (int b = a + 1; b < nl; ++b) total_all += pair_cost(a, b);

  auto emit = [&](int a, int b) {
    int ia = tree.leaf_ids[a], ib = tree.leaf_ids[b];
    out.emplace_back(std::min(ia, ib), std::max(ia, ib));
  };

  if (static_cast<double>(total_all) <= cap) {
    for (int a = 0; a < nl; ++a)
      for (int b = a + 1; b < nl; ++b) emit(a, b);
    return out;
  }

  std::map<std::pair<int, int>, long long> score;
  for (int i = 0; i < n; ++i) {
    for (const auto& [j, d] : table.lists[i]) {
      int a = leaf_of[i], b = leaf_of[j];
      if (a == b) continue;
      ++score[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<std::pair<long long, std::pair<int, int>>> ranked;
  ranked.reserve(score.size());
  for (const auto& [pr, sc] : score) ranked.push_back({sc, pr});
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  long long used = 0;
  for (const auto& [sc, pr] : ranked) {
    long long cost = pair_cost(pr.first, pr.second);
    if (static_cast<double>(used + cost) > cap) continue;
    used += cost;
    emit(pr.first, pr.second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Rank-revealing interpolative decomposition of the sampled block
/// K_{sample_cols, candidates}. Rank is the number of leading pivots with
/// |R_ll| > tau |R_11|, clamped to [1, s].
inline Skeleton skeletonize_node(int node_id, std::span<const int> candidates,
                                 std::span<const int> sample_cols,
                                 const EntryOracle& oracle, int s, double tau,
                                 long long* flops = nullptr) {
  Skeleton sk;
  if (sample_cols.empty()) return sk;  // non-compressible; caller handles
  sk.node_id = node_id;

  Matrix b = oracle.block(sample_cols, candidates);
  int rows = static_cast<int>(b.rows());
  int cols = static_cast<int>(b.cols());
  int maxrank = std::min({s, rows, cols});

  Eigen::ColPivHouseholderQR<Matrix> qr(b);
  Matrix r = qr.matrixQR().topRows(std::min(rows, cols)).triangularView<Eigen::Upper>();
  const auto& perm = qr.colsPermutation().indices();
  if (flops) *flops += 4LL * rows * cols * std::min(rows, cols);

  double lead = std::abs(r(0, 0));
  int rank = 0;
  for (int l = 0; l < std::min(rows, cols); ++l)
    if (std::abs(r(l, l)) > tau * lead) ++rank;
  rank = std::clamp(rank, 1, maxrank);
  sk.achieved_tol = (rank < std::min(rows, cols)) ? std::abs(r(rank, rank)) / std::max(lead, 1e-300) : 0.0;

  sk.skel.resize(rank);
  for (int l = 0; l < rank; ++l) sk.skel[l] = candidates[perm[l]];

  sk.proj = Matrix::Zero(rank, cols);
  for (int l = 0; l < rank; ++l) sk.proj(l, perm[l]) = 1.0;
  if (cols > rank && lead > 0.0) {
    Matrix t = r.topLeftCorner(rank, rank)
                   .triangularView<Eigen::Upper>()
                   .solve(r.block(0, rank, rank, cols - rank));
    for (int j = rank; j < cols; ++j) sk.proj.col(perm[j]) = t.col(j - rank);
    if (flops) *flops += 1LL * rank * rank * (cols - rank);
  }
  return sk;
}

/// Importance-sampled columns for skeletonization: neighbors of the node's
/// indices that land outside the node first, then uniform outside fill.
inline IndexList sample_columns(const MetricTree& tree, int node_id,
                                const NeighborTable& table, int n_samples, Rng& rng) {
  const TreeNode& nd = tree.nodes[node_id];
  int n = tree.size();
  int outside = n - nd.count();
  if (outside == 0) return {};
  n_samples = std::min(n_samples, outside);

  auto in_node = [&](int o) {
    int p = tree.perm[o];
    return p >= nd.start && p < nd.end;
  };

  IndexList cols;
  std::unordered_set<int> seen;
  cols.reserve(n_samples);
  for (int t = nd.start; t < nd.end && static_cast<int>(cols.size()) < n_samples; ++t) {
    int i = tree.iperm[t];
    for (const auto& [j, d] : table.lists[i]) {
      if (static_cast<int>(cols.size()) >= n_samples) break;
      if (in_node(j) || seen.count(j)) continue;
      seen.insert(j);
      cols.push_back(j);
    }
  }
  int attempts = 0;
  while (static_cast<int>(cols.size()) < n_samples && attempts < 100 * n_samples) {
    ++attempts;
    int o = rng.uniform(n);
    if (in_node(o) || seen.count(o)) continue;
    seen.insert(o);
    cols.push_back(o);
  }
  if (static_cast<int>(cols.size()) < n_samples) {
    for (int o = 0; o < n && static_cast<int>(cols.size()) < n_samples; ++o)
      if (!in_node(o) && !seen.count(o)) cols.push_back(o);
  }
  return cols;
}

namespace detail {

// Interaction structure: a dual-tree walk that partitions every
// off-diagonal index pair into either a direct leaf pair or a coupling at
// the highest node pair not crossed by a direct pair. Exactly-one coverage
// holds by construction.
struct Structure {
  std::vector<std::pair<int, int>> near;  // leaf node ids, a < b
  std::vector<std::pair<int, int>> far;   // node ids, a < b
};

class StructureWalker {
 public:
  StructureWalker(const MetricTree& tree, const std::vector<std::pair<int, int>>& near_pairs)
      : tree_(tree) {
    int nl = static_cast<int>(tree.leaf_ids.size());
    ord_of_leaf_.resize(tree.nodes.size(), -1);
    for (int li = 0; li < nl; ++li) ord_of_leaf_[tree.leaf_ids[li]] = li;
    for (auto [a, b] : near_pairs) {
      int x = ord_of_leaf_[a], y = ord_of_leaf_[b];
      admitted_.emplace_back(std::min(x, y), std::max(x, y));
    }
    leaf_lo_.resize(tree.nodes.size());
    leaf_hi_.resize(tree.nodes.size());
    compute_intervals(0);
  }

  Structure run() {
    Structure s;
    walk_diag(0, s);
    std::sort(s.near.begin(), s.near.end());
    std::sort(s.far.begin(), s.far.end());
    return s;
  }

 private:
  void compute_intervals(int id) {
    const TreeNode& nd = tree_.nodes[id];
    if (nd.is_leaf()) {
      leaf_lo_[id] = ord_of_leaf_[id];
      leaf_hi_[id] = ord_of_leaf_[id] + 1;
      return;
    }
    compute_intervals(nd.left);
    compute_intervals(nd.right);
    leaf_lo_[id] = leaf_lo_[nd.left];
    leaf_hi_[id] = leaf_hi_[nd.right];
  }

  bool crossed(int a, int b) const {
    auto inside = [&](int x, int id) { return x >= leaf_lo_[id] && x < leaf_hi_[id]; };
    for (auto [x, y] : admitted_)
      if ((inside(x, a) && inside(y, b)) || (inside(x, b) && inside(y, a))) return true;
    return false;
  }

  void walk_diag(int id, Structure& s) {
    const TreeNode& nd = tree_.nodes[id];
    if (nd.is_leaf()) return;
    walk_diag(nd.left, s);
    walk_diag(nd.right, s);
    walk_off(nd.left, nd.right, s);
  }

  void walk_off(int a, int b, Structure& s) {
    if (!crossed(a, b)) {
      s.far.emplace_back(std::min(a, b), std::max(a, b));
      return;
    }
    const TreeNode& na = tree_.nodes[a];
    const TreeNode& nb = tree_.nodes[b];
    if (na.is_leaf() && nb.is_leaf()) {
      s.near.emplace_back(std::min(a, b), std::max(a, b));
      return;
    }
    if (na.is_leaf()) {
      walk_off(a, nb.left, s);
      walk_off(a, nb.right, s);
    } else if (nb.is_leaf()) {
      walk_off(na.left, b, s);
      walk_off(na.right, b, s);
    } else {
      walk_off(na.left, nb.left, s);
      walk_off(na.left, nb.right, s);
      walk_off(na.right, nb.left, s);
      walk_off(na.right, nb.right, s);
    }
  }

  const MetricTree& tree_;
  std::vector<int> ord_of_leaf_;
  std::vector<int> leaf_lo_, leaf_hi_;
  std::vector<std::pair<int, int>> admitted_;
};

}  // namespace detail

/// Full pipeline: ANN table, metric tree, near-field selection,
/// bottom-up skeletonization, coupling blocks. Deterministic for a fixed
/// seed at any thread count.
inline HMatrix compress(const EntryOracle& oracle, const PointCloud* points,
                        const RunConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  auto t_total = clock::now();

  CountingOracle counted(oracle);
  Metric metric(config.kind, counted, points);
  int n = metric.size();

  HMatrix h;
  h.config = config;
  h.n = n;

  // neighbor search first, then the partitioning tree
  NeighborTable table = NeighborTable::empty(n, config.kappa);
  if (config.kappa > 0 && n > 1) {
    AnnResult ann = ann_search(metric, config.kappa, config.m, config.ann_iterations,
                               splitmix64(config.seed ^ 0xa221), 10, config.threads);
    table = std::move(ann.table);
    h.stats.ann_recall = std::move(ann.recall_per_iteration);
  }

  auto t_tree = clock::now();
  h.tree = build_tree(metric, config.m, config.seed);
  h.stats.tree_seconds = seconds_since(t_tree);

  auto admitted = select_near_field(h.tree, table, config.budget);
  detail::Structure structure = detail::StructureWalker(h.tree, admitted).run();

  // D blocks
  h.leaf_diag.resize(h.tree.nodes.size());
  int nleaves = static_cast<int>(h.tree.leaf_ids.size());
  parallel_for(0, nleaves, config.threads, [&](int li) {
    int id = h.tree.leaf_ids[li];
    IndexList ids = h.tree.node_indices(id);
    h.leaf_diag[id] = counted.block(ids, ids);
  });

  // S blocks
  h.near_field.resize(structure.near.size());
  parallel_for(0, static_cast<int>(structure.near.size()), config.threads, [&](int t) {
    auto [a, b] = structure.near[t];
    IndexList ia = h.tree.node_indices(a);
    IndexList ib = h.tree.node_indices(b);
    h.near_field[t] = {a, b, counted.block(ia, ib)};
  });
  for (const auto& blk : h.near_field)
    h.stats.near_field_entries += 2LL * blk.k.rows() * blk.k.cols();

  // skeletons, bottom-up by level so children complete before parents
  h.skeletons.resize(h.tree.nodes.size());
  std::vector<std::atomic<long long>> node_flops(h.tree.nodes.size());
  int n_samples_target = std::min(n, 2 * config.s + 32);
  for (int level = h.tree.depth; level >= 1; --level) {
    std::vector<int> level_nodes;
    for (const TreeNode& nd : h.tree.nodes)
      if (nd.level == level) level_nodes.push_back(nd.id);
    parallel_for(0, static_cast<int>(level_nodes.size()), config.threads, [&](int t) {
      int id = level_nodes[t];
      const TreeNode& nd = h.tree.nodes[id];
      IndexList candidates;
      if (nd.is_leaf()) {
        candidates = h.tree.node_indices(id);
      } else {
        const auto& ls = h.skeletons[nd.left].skel;
        const auto& rs = h.skeletons[nd.right].skel;
        candidates.reserve(ls.size() + rs.size());
        candidates.insert(candidates.end(), ls.begin(), ls.end());
        candidates.insert(candidates.end(), rs.begin(), rs.end());
      }
      Rng rng(config.seed ^ 0x51e7, splitmix64(nd.path));
      IndexList cols = sample_columns(h.tree, id, table, n_samples_target, rng);
      long long f = 0;
      h.skeletons[id] = skeletonize_node(id, candidates, cols, counted,
                                         config.s, config.tau, &f);
      node_flops[id].store(f, std::memory_order_relaxed);
    });
  }
  for (auto& f : node_flops) h.stats.compress_flops += f.load();

  // UV coupling blocks
  h.far_field.resize(structure.far.size());
  parallel_for(0, static_cast<int>(structure.far.size()), config.threads, [&](int t) {
    auto [a, b] = structure.far[t];
    h.far_field[t] = {a, b, counted.block(h.skeletons[a].skel, h.skeletons[b].skel)};
  });

  long long rank_sum = 0;
  int nskel = 0;
  for (const Skeleton& sk : h.skeletons) {
    if (!sk.valid()) continue;
    rank_sum += sk.rank();
    h.stats.max_skeleton = std::max(h.stats.max_skeleton, sk.rank());
    ++nskel;
  }
  h.stats.mean_skeleton = nskel ? static_cast<double>(rank_sum) / nskel : 0.0;
  h.stats.entries_evaluated = counted.entries();
  h.stats.compress_seconds = seconds_since(t_total);
  return h;
}

/// Machine-readable stats block, one key=value per line.
inline void print_compress_stats(std::ostream& os, const CompressStats& st) {
  os << "entries_evaluated=" << st.entries_evaluated << '\n'
     << "compress_flops=" << st.compress_flops << '\n'
     << "compress_seconds=" << st.compress_seconds << '\n'
     << "near_field_entries=" << st.near_field_entries << '\n'
     << "max_skeleton=" << st.max_skeleton << '\n'
     << "mean_skeleton=" << st.mean_skeleton << '\n';
}

}  // namespace gfmm

#endif  // GFMM_COMPRESS_HPP
