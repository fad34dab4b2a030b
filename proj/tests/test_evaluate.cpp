#include <catch2/catch_amalgamated.hpp>

#include "gfmm/gfmm.hpp"

using namespace gfmm;

namespace {

Matrix dense_from_oracle(const EntryOracle& oracle) {
  IndexList all(oracle.size());
  for (int i = 0; i < oracle.size(); ++i) all[i] = i;
  return oracle.block(all, all);
}

Matrix random_rhs(int n, int r, std::uint64_t seed) {
  Matrix w(n, r);
  Rng rng(seed, 0);
  for (int c = 0; c < r; ++c)
    for (int i = 0; i < n; ++i) w(i, c) = rng.gauss();
  return w;
}

HMatrix smooth_fixture(int n, std::uint64_t seed, double budget = 0.03) {
  auto pc = PointCloud::random_gaussian(n, 2, seed);
  auto oracle = gaussian_kernel_oracle(pc, 3.0);
  RunConfig cfg;
  cfg.m = 32;
  cfg.s = 32;
  cfg.tau = 1e-7;
  cfg.kappa = 8;
  cfg.budget = budget;
  cfg.seed = seed;
  return compress(*oracle, &pc, cfg);
}

}  // namespace

TEST_CASE("single-leaf evaluation matches the dense product bit for bit") {
  auto oracle = random_spd_oracle(24, 3);
  RunConfig cfg;
  cfg.m = 32;
  cfg.s = 16;
  HMatrix h = compress(*oracle, nullptr, cfg);
  REQUIRE(h.tree.nodes.size() == 1);

  Matrix w = random_rhs(24, 3, 5);
  Potentials p = evaluate(h, w);
  Matrix expect = dense_from_oracle(*oracle) * w;
  CHECK(unpermute(h.tree, p.u) == expect);
  CHECK(p.flops == 2LL * 24 * 24 * 3);
}

TEST_CASE("zero input gives zero output") {
  HMatrix h = smooth_fixture(200, 1);
  Potentials p = evaluate(h, Matrix::Zero(200, 2));
  CHECK(p.u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("evaluation is linear") {
  HMatrix h = smooth_fixture(256, 9);
  Matrix x = random_rhs(256, 1, 1), y = random_rhs(256, 1, 2);
  double a = 2.25, b = -0.5;
  Matrix ux = evaluate(h, x).u;
  Matrix uy = evaluate(h, y).u;
  Matrix uc = evaluate(h, (a * x + b * y).eval()).u;
  double scale = ux.norm() + uy.norm();
  CHECK((uc - a * ux - b * uy).norm() <= 1e-12 * scale);
}

TEST_CASE("the compressed operator is symmetric") {
  HMatrix h = smooth_fixture(300, 4, 0.05);
  Rng rng(8, 0);
  for (int t = 0; t < 5; ++t) {
    Matrix x = random_rhs(300, 1, rng.next());
    Matrix y = random_rhs(300, 1, rng.next());
    Matrix kx = unpermute(h.tree, evaluate(h, x).u);
    Matrix ky = unpermute(h.tree, evaluate(h, y).u);
    double lhs = (x.transpose() * ky)(0, 0);
    double rhs = (kx.transpose() * y)(0, 0);
    double scale = x.norm() * ky.norm() + y.norm() * kx.norm();
    REQUIRE(std::abs(lhs - rhs) <= 1e-12 * scale);
  }
}

TEST_CASE("both traversal modes and all thread counts agree bit for bit") {
  HMatrix h = smooth_fixture(400, 13);
  Matrix w = random_rhs(400, 2, 3);

  EvalOptions base;
  base.mode = TraversalMode::LevelByLevel;
  base.threads = 1;
  Matrix ref = evaluate(h, w, base).u;

  for (TraversalMode mode : {TraversalMode::LevelByLevel, TraversalMode::TaskDag}) {
    for (int threads : {1, 2, 4, 8}) {
      EvalOptions o;
      o.mode = mode;
      o.threads = threads;
      Potentials p = evaluate(h, w, o);
      REQUIRE(p.u == ref);
    }
  }
}

TEST_CASE("task traces honor the dependency structure") {
  HMatrix h = smooth_fixture(256, 21);
  EvalPlan plan = traversal_schedule(h, TraversalMode::TaskDag);
  Matrix w = random_rhs(256, 1, 4);

  for (TraversalMode mode : {TraversalMode::LevelByLevel, TraversalMode::TaskDag}) {
    std::vector<int> trace;
    EvalOptions o;
    o.mode = mode;
    o.threads = 3;
    o.trace = &trace;
    evaluate(h, w, o);

    REQUIRE(trace.size() == plan.tasks.size());
    std::vector<int> pos(plan.tasks.size());
    for (size_t t = 0; t < trace.size(); ++t) pos[trace[t]] = static_cast<int>(t);
    for (size_t t = 0; t < plan.tasks.size(); ++t)
      for (int d : plan.tasks[t].deps) REQUIRE(pos[d] < pos[t]);  // deps start first
  }

  // specifically: every coupling starts after the upward pass of each endpoint
  for (size_t t = 0; t < plan.tasks.size(); ++t) {
    if (plan.tasks[t].kind != EvalPlan::Kind::Coupling) continue;
    int id = plan.tasks[t].node;
    REQUIRE(!plan.tasks[t].deps.empty());
    bool has_own = false;
    for (int d : plan.tasks[t].deps)
      if (d == plan.upward_of[id]) has_own = true;
    REQUIRE(has_own);
  }
}

TEST_CASE("matvec error tracks the dense reconstruction") {
  int n = 384;
  auto pc = PointCloud::random_gaussian(n, 2, 2);
  auto oracle = gaussian_kernel_oracle(pc, 3.0);
  RunConfig cfg;
  cfg.m = 32;
  cfg.s = 32;
  cfg.tau = 1e-7;
  cfg.kappa = 8;
  cfg.budget = 0.03;
  HMatrix h = compress(*oracle, &pc, cfg);

  Matrix w = random_rhs(n, 1, 6);
  Matrix u = unpermute(h.tree, evaluate(h, w).u);
  Matrix exact = dense_from_oracle(*oracle) * w;
  CHECK((u - exact).norm() / exact.norm() <= 1e-3);
}

TEST_CASE("error report on an exact representation") {
  auto oracle = random_spd_oracle(64, 2);
  RunConfig cfg;
  cfg.m = 32;
  cfg.s = 32;
  cfg.kappa = 8;
  cfg.budget = 1.0;  // D + S covers everything
  HMatrix h = compress(*oracle, nullptr, cfg);

  ErrorReport rep = error_eps2(h, *oracle, 2, 64, 11);
  CHECK(rep.eps2 <= 1e-13);
  CHECK(rep.mean_sample <= 1e-13);
  CHECK(rep.per_entry.size() == 10);
  CHECK(rep.sample_rows.size() == 64);  // sample_rows = N keeps every row
  CHECK(rep.eval_flops > 0);
  for (double e : rep.per_entry) CHECK(e >= 0.0);
}

TEST_CASE("error report is moderate on a compressed smooth kernel") {
  int n = 512;
  auto pc = PointCloud::random_gaussian(n, 2, 7);
  auto oracle = gaussian_kernel_oracle(pc, 3.0);
  RunConfig cfg;
  cfg.m = 64;
  cfg.s = 64;
  cfg.tau = 1e-7;
  cfg.kappa = 16;
  cfg.budget = 0.03;
  HMatrix h = compress(*oracle, &pc, cfg);

  ErrorReport rep = error_eps2(h, *oracle, 2, 100, 3);
  CHECK(rep.eps2 <= 1e-3);
  CHECK(rep.sample_rows.size() == 100);
  // deterministic for a fixed seed
  ErrorReport rep2 = error_eps2(h, *oracle, 2, 100, 3);
  CHECK(rep.eps2 == rep2.eps2);
}

TEST_CASE("evaluate rejects malformed input") {
  HMatrix h = smooth_fixture(64, 1);
  CHECK_THROWS_AS(evaluate(h, Matrix::Zero(63, 1)), std::invalid_argument);
  auto oracle = random_spd_oracle(64, 1);
  CHECK_THROWS_AS(error_eps2(h, *oracle, 0, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(error_eps2(h, *oracle, 1, 0, 1), std::invalid_argument);
}

TEST_CASE("unpermute inverts the tree ordering") {
  HMatrix h = smooth_fixture(128, 5);
  Matrix w(128, 1);
  for (int i = 0; i < 128; ++i) w(i, 0) = i;
  Matrix perm(128, 1);
  for (int t = 0; t < 128; ++t) perm(t, 0) = w(h.tree.iperm[t], 0);
  CHECK(unpermute(h.tree, perm) == w);
}
