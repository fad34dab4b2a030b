#include <catch2/catch_amalgamated.hpp>

#include "gfmm/gfmm.hpp"

#include <cstdio>
#include <filesystem>

using namespace gfmm;

namespace {

PointCloud line_points(int n, double spacing = 1.0) {
  PointCloud pc;
  pc.coords.resize(1, n);
  for (int i = 0; i < n; ++i) pc.coords(0, i) = spacing * i;
  return pc;
}

double table_recall(const NeighborTable& approx, const NeighborTable& exact) {
  long long hit = 0, total = 0;
  for (int i = 0; i < exact.size(); ++i) {
    for (const auto& [j, d] : approx.lists[i]) {
      for (const auto& [je, de] : exact.lists[i])
        if (je == j) { ++hit; break; }
    }
    total += exact.lists[i].size();
  }
  return static_cast<double>(hit) / total;
}

bool same_table(const NeighborTable& a, const NeighborTable& b) {
  if (a.k != b.k || a.lists != b.lists) return false;
  return true;
}

}  // namespace

TEST_CASE("brute force on a 1d line") {
  auto pc = line_points(5);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  NeighborTable t = brute_force_neighbors(m, 2);
  REQUIRE(t.k == 2);
  // index 2 has 1 and 3 at distance 1; tie resolved toward the smaller index
  REQUIRE(t.lists[2].size() == 2);
  CHECK(t.lists[2][0] == std::pair<int, double>{1, 1.0});
  CHECK(t.lists[2][1] == std::pair<int, double>{3, 1.0});
  // endpoints
  CHECK(t.lists[0][0].first == 1);
  CHECK(t.lists[0][1].first == 2);
}

TEST_CASE("brute force on the identity matrix ties toward small indices") {
  DenseOracle oracle(Matrix::Identity(6, 6));
  Metric m(DistanceKind::KernelL2, oracle);
  NeighborTable t = brute_force_neighbors(m, 3);
  // every pair is at distance sqrt(2); list = first 3 indices != i
  CHECK(t.lists[0][0].first == 1);
  CHECK(t.lists[0][1].first == 2);
  CHECK(t.lists[0][2].first == 3);
  CHECK(t.lists[4][0].first == 0);
  for (const auto& [j, d] : t.lists[5]) CHECK(d == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("kappa larger than N-1 is clamped") {
  auto pc = line_points(4);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  NeighborTable t = brute_force_neighbors(m, 10);
  CHECK(t.k == 3);
  for (const auto& list : t.lists) CHECK(list.size() == 3);
}

TEST_CASE("no index appears in its own list") {
  auto pc = PointCloud::random_gaussian(60, 3, 2);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  AnnResult res = ann_search(m, 8, 16, 4, 9);
  for (int i = 0; i < 60; ++i)
    for (const auto& [j, d] : res.table.lists[i]) REQUIRE(j != i);
}

TEST_CASE("single-leaf search is exact after one iteration") {
  auto pc = PointCloud::random_gaussian(40, 2, 7);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  AnnResult res = ann_search(m, 6, 64, 1, 3);  // m >= N, one leaf
  NeighborTable exact = brute_force_neighbors(m, 6);
  CHECK(same_table(res.table, exact));
  REQUIRE(res.recall_per_iteration.size() == 1);
  CHECK(res.recall_per_iteration[0] == 1.0);
}

TEST_CASE("stored distances match recomputation") {
  auto pc = PointCloud::random_gaussian(100, 4, 13);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  for (DistanceKind kind : {DistanceKind::KernelL2, DistanceKind::Angle}) {
    Metric m(kind, *oracle);
    AnnResult res = ann_search(m, 8, 16, 3, 5);
    for (int i = 0; i < 100; ++i) {
      double prev = -1.0;
      for (const auto& [j, d] : res.table.lists[i]) {
        REQUIRE(d == Catch::Approx(m(i, j)).margin(1e-12));
        REQUIRE(d >= prev);  // sorted
        prev = d;
      }
    }
  }
}

TEST_CASE("recall is monotone and reaches 0.8 on clustered line data") {
  auto pc = line_points(512, 0.37);
  auto oracle = gaussian_kernel_oracle(pc, 20.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  NeighborTable exact = brute_force_neighbors(m, 16);

  NeighborTable table = NeighborTable::empty(512, 16);
  double prev = 0.0;
  double last = 0.0;
  for (int it = 0; it < 10; ++it) {
    ann_iteration(table, m, 64, 1000 + it);
    bool complete = true;
    for (const auto& list : table.lists)
      if (list.size() != 16) complete = false;
    if (!complete) continue;
    last = table_recall(table, exact);
    REQUIRE(last >= prev - 1e-12);  // merging never loses a neighbor
    prev = last;
  }
  CHECK(last >= 0.8);
}

TEST_CASE("search is deterministic across thread counts") {
  auto pc = PointCloud::random_gaussian(300, 3, 21);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  AnnResult a = ann_search(m, 12, 32, 5, 77, 10, 1);
  AnnResult b = ann_search(m, 12, 32, 5, 77, 10, 4);
  AnnResult c = ann_search(m, 12, 32, 5, 77, 10, 7);
  CHECK(same_table(a.table, b.table));
  CHECK(same_table(a.table, c.table));
  CHECK(a.recall_per_iteration == b.recall_per_iteration);
}

TEST_CASE("recall sample of zero reports nan") {
  auto pc = PointCloud::random_gaussian(30, 2, 4);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::KernelL2, *oracle);
  AnnResult res = ann_search(m, 4, 8, 2, 1, 0);
  REQUIRE(res.recall_per_iteration.size() == 2);
  for (double r : res.recall_per_iteration) CHECK(std::isnan(r));
}

TEST_CASE("neighbor file dump") {
  auto pc = line_points(6);
  auto oracle = gaussian_kernel_oracle(pc, 1.0);
  Metric m(DistanceKind::GeometricL2, *oracle, &pc);
  NeighborTable t = brute_force_neighbors(m, 2);

  std::string path =
      (std::filesystem::temp_directory_path() / "gfmm_test_nn.bin").string();
  write_neighbor_file(path, t);

  std::ifstream f(path, std::ios::binary);
  char magic[4];
  f.read(magic, 4);
  REQUIRE(std::string(magic, 4) == "GNNT");
  std::uint32_t version;
  std::uint64_t n, k;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&k), 8);
  CHECK(version == 1);
  CHECK(n == 6);
  CHECK(k == 2);
  std::uint64_t j0;
  double d0;
  f.read(reinterpret_cast<char*>(&j0), 8);
  f.read(reinterpret_cast<char*>(&d0), 8);
  CHECK(j0 == 1);
  CHECK(d0 == 1.0);
  f.seekg(0, std::ios::end);
  CHECK(f.tellg() == 4 + 4 + 8 + 8 + 6 * 2 * 16);

  // incomplete tables are refused
  NeighborTable partial = NeighborTable::empty(6, 2);
  CHECK_THROWS_AS(write_neighbor_file(path, partial), io_error);
  std::remove(path.c_str());
}
