#include <catch2/catch_amalgamated.hpp>

#include "gfmm/gfmm.hpp"

#include <set>
#include <sstream>

using namespace gfmm;

namespace {

PointCloud line_points(std::initializer_list<double> xs) {
  PointCloud pc;
  pc.coords.resize(1, xs.size());
  int i = 0;
  for (double x : xs) pc.coords(0, i++) = x;
  return pc;
}

void check_tree_invariants(const MetricTree& tree) {
  int n = tree.size();
  // permutation validity
  IndexList sorted = tree.perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) REQUIRE(sorted[i] == i);
  for (int i = 0; i < n; ++i) REQUIRE(tree.perm[tree.iperm[i]] == i);

  std::set<int> covered;
  for (int id : tree.leaf_ids) {
    const TreeNode& nd = tree.nodes[id];
    REQUIRE(nd.is_leaf());
    REQUIRE(nd.count() <= tree.leaf_size);
    REQUIRE(nd.count() >= 1);
    for (int t = nd.start; t < nd.end; ++t) {
      REQUIRE(!covered.count(tree.iperm[t]));
      covered.insert(tree.iperm[t]);
    }
  }
  REQUIRE(static_cast<int>(covered.size()) == n);

  for (const TreeNode& nd : tree.nodes) {
    if (nd.is_leaf()) {
      REQUIRE(nd.count() <= tree.leaf_size);
      continue;
    }
    const TreeNode& lc = tree.nodes[nd.left];
    const TreeNode& rc = tree.nodes[nd.right];
    REQUIRE(nd.count() > tree.leaf_size);
    REQUIRE(lc.start == nd.start);
    REQUIRE(rc.end == nd.end);
    REQUIRE(lc.end == rc.start);
    REQUIRE(std::abs(lc.count() - rc.count()) <= 1);  // balance
  }
}

bool same_shape(const MetricTree& a, const MetricTree& b) {
  if (a.perm != b.perm) return false;
  if (a.nodes.size() != b.nodes.size()) return false;
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    const TreeNode& x = a.nodes[i];
    const TreeNode& y = b.nodes[i];
    if (x.start != y.start || x.end != y.end || x.left != y.left) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("metric split hand trace on a 1d line") {
  auto pc = line_points({0.0, 1.0, 2.0, 3.0});
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  IndexList idx{0, 1, 2, 3};
  Rng rng(0, 0);
  SplitResult sp = metric_split(idx, m, rng);
  // full-sample centroid at 1.5; farthest (tie to smallest index) p=0, then q=3
  CHECK(sp.p == 0);
  CHECK(sp.q == 3);
  CHECK(sp.left == IndexList{0, 1});
  CHECK(sp.right == IndexList{2, 3});
}

TEST_CASE("metric split of two indices") {
  auto pc = line_points({0.0, 5.0});
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  IndexList idx{0, 1};
  Rng rng(0, 0);
  SplitResult sp = metric_split(idx, m, rng);
  CHECK(sp.left.size() == 1);
  CHECK(sp.right.size() == 1);
}

TEST_CASE("identity matrix ties fall back to even split in order") {
  DenseOracle oracle(Matrix::Identity(8, 8));
  Metric m(DistanceKind::KernelL2, oracle);
  IndexList idx{0, 1, 2, 3, 4, 5, 6, 7};
  Rng rng(1, 0);
  SplitResult sp = metric_split(idx, m, rng);
  // all s_i tie, stable order keeps the first half left
  CHECK(sp.left == IndexList{0, 1, 2, 3});
  CHECK(sp.right == IndexList{4, 5, 6, 7});
}

TEST_CASE("single leaf when N <= m") {
  auto pc = PointCloud::random_gaussian(10, 2, 0);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  MetricTree tree = build_tree(m, 16, 0);
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.leaf_ids == std::vector<int>{0});
  IndexList identity(10);
  for (int i = 0; i < 10; ++i) identity[i] = i;
  CHECK(tree.perm == identity);
}

TEST_CASE("forced complete tree shapes") {
  auto pc = PointCloud::random_gaussian(4, 2, 5);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  MetricTree tree = build_tree(m, 1, 3);
  CHECK(tree.depth == 2);
  CHECK(tree.leaf_ids.size() == 4);
  check_tree_invariants(tree);

  auto pc2 = PointCloud::random_gaussian(1000, 3, 5);
  auto oracle2 = gaussian_kernel_oracle(pc2, 1.0);
  Metric m2(DistanceKind::KernelL2, *oracle2);
  MetricTree t2 = build_tree(m2, 256, 3);
  REQUIRE(t2.leaf_ids.size() == 4);
  for (int id : t2.leaf_ids) CHECK(t2.nodes[id].count() == 250);
}

TEST_CASE("randomized split basics") {
  auto pc = line_points({0.0, 7.0});
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  IndexList idx{0, 1};
  Rng rng(4, 0);
  SplitResult sp = randomized_split(idx, m, rng);
  CHECK(sp.left.size() == 1);
  CHECK(sp.right.size() == 1);
  CHECK(sp.p != sp.q);
}

TEST_CASE("random trees vary with the seed") {
  PointCloud pc;
  pc.coords.resize(1, 64);
  Rng rng(99, 0);
  for (int i = 0; i < 64; ++i)
    pc.coords(0, i) = (i % 2 ? 10.0 : 0.0) + rng.gauss() * 0.3;  // two clusters
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);

  MetricTree base = build_random_tree(m, 8, 0);
  MetricTree same = build_random_tree(m, 8, 0);
  CHECK(same_shape(base, same));  // determinism

  int differing = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed)
    if (!same_shape(base, build_random_tree(m, 8, seed))) ++differing;
  CHECK(differing >= 1);
}

TEST_CASE("tree invariants over random configurations") {
  Rng rng(123, 0);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + rng.uniform(300);
    int m = 1 + rng.uniform(64);
    int d = 1 + rng.uniform(5);
    DistanceKind kind = static_cast<DistanceKind>(rng.uniform(3));
    std::uint64_t seed = rng.next();

    auto pc = PointCloud::random_gaussian(n, d, seed);
    auto oracle = gaussian_kernel_oracle(pc, 1.0);
    Metric metric(kind, *oracle, &pc);
    MetricTree tree = build_tree(metric, m, seed);
    check_tree_invariants(tree);
  }
}

TEST_CASE("metric scaling leaves the tree unchanged") {
  auto base = random_spd_oracle(120, 31);
  IndexList all(120);
  for (int i = 0; i < 120; ++i) all[i] = i;
  Matrix k = base->block(all, all);

  for (double alpha : {0.5, 3.0}) {
    DenseOracle orig(k), scaled((alpha * k).eval());
    for (DistanceKind kind : {DistanceKind::KernelL2, DistanceKind::Angle}) {
      Metric m1(kind, orig), m2(kind, scaled);
      CHECK(same_shape(build_tree(m1, 16, 7), build_tree(m2, 16, 7)));
    }
  }

  // angle distance is invariant under diagonal conjugation
  Rng rng(8, 0);
  Vector dscale(120);
  for (int i = 0; i < 120; ++i) dscale[i] = 0.5 + 2.0 * rng.uniform01();
  DenseOracle orig(k), conj((dscale.asDiagonal() * k * dscale.asDiagonal()).eval());
  Metric m1(DistanceKind::Angle, orig), m2(DistanceKind::Angle, conj);
  CHECK(same_shape(build_tree(m1, 16, 7), build_tree(m2, 16, 7)));
}

TEST_CASE("root split separates two well-separated clusters") {
  int n = 256;
  PointCloud pc;
  pc.coords.resize(3, n);
  Rng rng(5, 0);
  std::vector<int> label(n);
  for (int i = 0; i < n; ++i) {
    label[i] = i % 2;
    for (int d = 0; d < 3; ++d)
      pc.coords(d, i) = rng.gauss() * 0.2 + (label[i] ? 8.0 : 0.0);
  }
  auto oracle = gaussian_kernel_oracle(pc, 4.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  MetricTree tree = build_tree(m, 64, 12);

  const TreeNode& lc = tree.nodes[tree.nodes[0].left];
  int match = 0;
  int lc_label = label[tree.iperm[lc.start]];
  for (int t = lc.start; t < lc.end; ++t)
    if (label[tree.iperm[t]] == lc_label) ++match;
  CHECK(static_cast<double>(match) / lc.count() >= 0.95);
}

TEST_CASE("tree dump format") {
  auto pc = PointCloud::random_gaussian(8, 2, 1);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  MetricTree tree = build_tree(m, 4, 0);
  std::ostringstream os;
  dump_tree(os, tree);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    int id, level, start, end, p, q;
    REQUIRE((ls >> id >> level >> start >> end >> p >> q));
    ++lines;
  }
  CHECK(lines == static_cast<int>(tree.nodes.size()));
}
