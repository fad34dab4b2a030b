#ifndef GFMM_EVALUATE_HPP
#define GFMM_EVALUATE_HPP

#include <condition_variable>
#include <deque>
#include <mutex>
#include <numeric>

#include "gfmm/compress.hpp"

namespace gfmm {

enum class TraversalMode { LevelByLevel, TaskDag };

struct Potentials {
  Matrix u;  // N x r, permuted (tree) order
  long long flops = 0;
  double seconds = 0.0;
};

inline Matrix unpermute(const MetricTree& tree, const Matrix& u_perm) {
  Matrix out(u_perm.rows(), u_perm.cols());
  for (int t = 0; t < u_perm.rows(); ++t) out.row(tree.iperm[t]) = u_perm.row(t);
  return out;
}

/// Execution plan for one matvec. Tasks own disjoint output ranges and
/// accumulate their inputs in a fixed order, so any schedule that honors
/// the dependency edges reproduces the sequential result bit for bit.
struct EvalPlan {
  enum class Kind { Upward, Coupling, Downward, Output };

  struct Task {
    Kind kind;
    int node;
    std::vector<int> deps;
    int phase;  // level-by-level group, ascending
  };

  std::vector<Task> tasks;
  // per node: coupling partners (partner id, block index, transposed)
  struct Partner {
    int other;
    int block;
    bool transposed;
  };
  std::vector<std::vector<Partner>> partners;
  std::vector<std::vector<int>> near_of_leaf;  // near block indices touching each leaf
  std::vector<int> upward_of, coupling_of, downward_of, output_of;  // node -> task id
};

inline EvalPlan traversal_schedule(const HMatrix& h, TraversalMode mode) {
  const MetricTree& tree = h.tree;
  int nn = static_cast<int>(tree.nodes.size());
  EvalPlan plan;
  plan.partners.assign(nn, {});
  plan.near_of_leaf.assign(nn, {});
  plan.upward_of.assign(nn, -1);
  plan.coupling_of.assign(nn, -1);
  plan.downward_of.assign(nn, -1);
  plan.output_of.assign(nn, -1);

  for (int t = 0; t < static_cast<int>(h.far_field.size()); ++t) {
    const auto& blk = h.far_field[t];
    plan.partners[blk.a].push_back({blk.b, t, false});
    plan.partners[blk.b].push_back({blk.a, t, true});
  }
  for (auto& ps : plan.partners)
    std::sort(ps.begin(), ps.end(),
              [](const EvalPlan::Partner& x, const EvalPlan::Partner& y) { return x.other < y.other; });
  for (int t = 0; t < static_cast<int>(h.near_field.size()); ++t) {
    plan.near_of_leaf[h.near_field[t].a].push_back(t);
    plan.near_of_leaf[h.near_field[t].b].push_back(t);
  }

  auto add = [&](EvalPlan::Kind kind, int node, std::vector<int> deps, int phase) {
    plan.tasks.push_back({kind, node, std::move(deps), phase});
    return static_cast<int>(plan.tasks.size()) - 1;
  };

  int depth = tree.depth;
  // upward, deepest level first
  for (int level = depth; level >= 1; --level) {
    for (const TreeNode& nd : tree.nodes) {
      if (nd.level != level || !h.skeletons[nd.id].valid()) continue;
      std::vector<int> deps;
      if (!nd.is_leaf()) {
        deps.push_back(plan.upward_of[nd.left]);
        deps.push_back(plan.upward_of[nd.right]);
      }
      plan.upward_of[nd.id] = add(EvalPlan::Kind::Upward, nd.id, std::move(deps), depth - level);
    }
  }
  // couplings: ready once both endpoints' skeleton weights exist
  for (int id = 0; id < nn; ++id) {
    if (plan.partners[id].empty()) continue;
    std::vector<int> deps{plan.upward_of[id]};
    for (const auto& p : plan.partners[id]) deps.push_back(plan.upward_of[p.other]);
    plan.coupling_of[id] = add(EvalPlan::Kind::Coupling, id, std::move(deps), depth + 1);
  }
  // downward, top level first
  for (int level = 1; level <= depth; ++level) {
    for (const TreeNode& nd : tree.nodes) {
      if (nd.level != level || !h.skeletons[nd.id].valid()) continue;
      std::vector<int> deps;
      if (plan.coupling_of[nd.id] >= 0) deps.push_back(plan.coupling_of[nd.id]);
      if (nd.parent > 0 && plan.downward_of[nd.parent] >= 0)
        deps.push_back(plan.downward_of[nd.parent]);
      plan.downward_of[nd.id] = add(EvalPlan::Kind::Downward, nd.id, std::move(deps), depth + 1 + level);
    }
  }
  // leaf outputs
  for (int li : tree.leaf_ids) {
    std::vector<int> deps;
    if (plan.downward_of[li] >= 0) deps.push_back(plan.downward_of[li]);
    plan.output_of[li] = add(EvalPlan::Kind::Output, li, std::move(deps), 2 * depth + 2);
  }
  (void)mode;  // same task set; the mode selects the executor
  return plan;
}

struct EvalOptions {
  TraversalMode mode = TraversalMode::TaskDag;
  int threads = 1;
  std::vector<int>* trace = nullptr;  // executed task ids, in start order
};

namespace detail {

struct EvalState {
  const HMatrix* h;
  const EvalPlan* plan;
  const Matrix* w_perm;
  Matrix u;
  std::vector<Matrix> what;  // skeleton weights per node
  std::vector<Matrix> cfar;  // coupling sums per node
  std::vector<Matrix> c;     // incoming potentials per node
  std::atomic<long long> flops{0};
};

inline void run_task(EvalState& st, int task_id) {
  const EvalPlan::Task& task = (*st.plan).tasks[task_id];
  const HMatrix& h = *st.h;
  const MetricTree& tree = h.tree;
  const TreeNode& nd = tree.nodes[task.node];
  const int r = static_cast<int>(st.w_perm->cols());
  long long f = 0;

  switch (task.kind) {
    case EvalPlan::Kind::Upward: {
      const Skeleton& sk = h.skeletons[nd.id];
      if (nd.is_leaf()) {
        st.what[nd.id] = sk.proj * st.w_perm->middleRows(nd.start, nd.count());
        f += 2LL * sk.rank() * nd.count() * r;
      } else {
        Matrix cw(sk.proj.cols(), r);
        cw.topRows(st.what[nd.left].rows()) = st.what[nd.left];
        cw.bottomRows(st.what[nd.right].rows()) = st.what[nd.right];
        st.what[nd.id] = sk.proj * cw;
        f += 2LL * sk.rank() * sk.proj.cols() * r;
      }
      break;
    }
    case EvalPlan::Kind::Coupling: {
      // fixed partner order (ascending node id) pins the accumulation
      Matrix acc = Matrix::Zero(h.skeletons[nd.id].rank(), r);
      for (const auto& p : (*st.plan).partners[nd.id]) {
        const Matrix& blk = h.far_field[p.block].k;
        if (p.transposed)
          acc.noalias() += blk.transpose() * st.what[p.other];
        else
          acc.noalias() += blk * st.what[p.other];
        f += 2LL * blk.rows() * blk.cols() * r;
      }
      st.cfar[nd.id] = std::move(acc);
      break;
    }
    case EvalPlan::Kind::Downward: {
      const Skeleton& sk = h.skeletons[nd.id];
      Matrix acc;
      if (st.cfar[nd.id].size() > 0)
        acc = st.cfar[nd.id];
      else
        acc = Matrix::Zero(sk.rank(), r);
      if (nd.parent > 0 && h.skeletons[nd.parent].valid() && st.c[nd.parent].size() > 0) {
        const Skeleton& pk = h.skeletons[nd.parent];
        const TreeNode& par = tree.nodes[nd.parent];
        int lrank = h.skeletons[par.left].rank();
        int off = (nd.id == par.left) ? 0 : lrank;
        acc.noalias() += pk.proj.middleCols(off, sk.rank()).transpose() * st.c[nd.parent];
        f += 2LL * pk.rank() * sk.rank() * r;
      }
      st.c[nd.id] = std::move(acc);
      break;
    }
    case EvalPlan::Kind::Output: {
      auto out = st.u.middleRows(nd.start, nd.count());
      out.noalias() = h.leaf_diag[nd.id] * st.w_perm->middleRows(nd.start, nd.count());
      f += 2LL * nd.count() * nd.count() * r;
      for (int bi : (*st.plan).near_of_leaf[nd.id]) {
        const auto& blk = h.near_field[bi];
        if (blk.a == nd.id) {
          const TreeNode& other = tree.nodes[blk.b];
          out.noalias() += blk.k * st.w_perm->middleRows(other.start, other.count());
        } else {
          const TreeNode& other = tree.nodes[blk.a];
          out.noalias() += blk.k.transpose() * st.w_perm->middleRows(other.start, other.count());
        }
        f += 2LL * blk.k.rows() * blk.k.cols() * r;
      }
      const Skeleton& sk = h.skeletons[nd.id];
      if (sk.valid() && st.c[nd.id].size() > 0) {
        out.noalias() += sk.proj.transpose() * st.c[nd.id];
        f += 2LL * sk.rank() * nd.count() * r;
      }
      break;
    }
  }
  st.flops.fetch_add(f, std::memory_order_relaxed);
}

inline void execute_levels(EvalState& st, const EvalOptions& opts) {
  const auto& tasks = (*st.plan).tasks;
  int max_phase = 0;
  for (const auto& t : tasks) max_phase = std::max(max_phase, t.phase);
  for (int phase = 0; phase <= max_phase; ++phase) {
    std::vector<int> group;
    for (int t = 0; t < static_cast<int>(tasks.size()); ++t)
      if (tasks[t].phase == phase) group.push_back(t);
    if (opts.trace)
      for (int t : group) opts.trace->push_back(t);
    parallel_for(0, static_cast<int>(group.size()), opts.threads,
                 [&](int i) { run_task(st, group[i]); });
  }
}

inline void execute_dag(EvalState& st, const EvalOptions& opts) {
  const auto& tasks = (*st.plan).tasks;
  int nt = static_cast<int>(tasks.size());
  std::vector<std::vector<int>> dependents(nt);
  std::vector<int> pending(nt, 0);
  for (int t = 0; t < nt; ++t) {
    pending[t] = static_cast<int>(tasks[t].deps.size());
    for (int d : tasks[t].deps) dependents[d].push_back(t);
  }

  std::mutex mu;
  std::condition_variable cv;
  std::deque<int> ready;
  int remaining = nt;
  for (int t = 0; t < nt; ++t)
    if (pending[t] == 0) ready.push_back(t);

  auto worker = [&] {
    std::unique_lock lock(mu);
    while (true) {
      cv.wait(lock, [&] { return remaining == 0 || !ready.empty(); });
      if (remaining == 0) return;
      int t = ready.front();
      ready.pop_front();
      if (opts.trace) opts.trace->push_back(t);
      lock.unlock();
      run_task(st, t);
      lock.lock();
      --remaining;
      for (int d : dependents[t])
        if (--pending[d] == 0) ready.push_back(d);
      cv.notify_all();
      if (remaining == 0) return;
    }
  };

  int threads = std::max(1, opts.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
}

}  // namespace detail

/// Fast matvec u = K~ w. w is in the original index order (N x r); the
/// returned potentials are in permuted order (see unpermute).
inline Potentials evaluate(const HMatrix& h, const Matrix& w, const EvalOptions& opts = {}) {
  if (w.rows() != h.n) throw std::invalid_argument("evaluate: w has wrong row count");
  if (w.cols() < 1) throw std::invalid_argument("evaluate: w needs at least one column");
  auto t0 = std::chrono::steady_clock::now();

  EvalPlan plan = traversal_schedule(h, opts.mode);

  Matrix w_perm(w.rows(), w.cols());
  for (int t = 0; t < h.n; ++t) w_perm.row(t) = w.row(h.tree.iperm[t]);

  detail::EvalState st;
  st.h = &h;
  st.plan = &plan;
  st.w_perm = &w_perm;
  st.u.resize(h.n, w.cols());
  int nn = static_cast<int>(h.tree.nodes.size());
  st.what.resize(nn);
  st.cfar.resize(nn);
  st.c.resize(nn);

  if (opts.mode == TraversalMode::LevelByLevel)
    detail::execute_levels(st, opts);
  else
    detail::execute_dag(st, opts);

  Potentials p;
  p.u = std::move(st.u);
  p.flops = st.flops.load();
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return p;
}

struct ErrorReport {
  double eps2 = 0.0;
  std::vector<double> per_entry;  // relative row errors, first 10 sampled rows
  double mean_sample = 0.0;       // average relative row error over the sample
  IndexList sample_rows;          // original indices, for reproducibility
  long long eval_flops = 0;
  double eval_seconds = 0.0;
};

/// Sampled relative error: ||(K~w - Kw)_S||_F / ||(Kw)_S||_F over
/// sample_rows uniformly chosen rows, with standard normal w.
inline ErrorReport error_eps2(const HMatrix& h, const EntryOracle& oracle, int r,
                              int sample_rows, std::uint64_t seed,
                              const EvalOptions& opts = {}) {
  if (sample_rows < 1) throw std::invalid_argument("sample_rows must be >= 1");
  if (r < 1) throw std::invalid_argument("r must be >= 1");
  int n = h.n;
  Rng rng(seed, 0xe952);

  ErrorReport rep;
  rep.sample_rows = rng.sample_without_replacement(n, std::min(sample_rows, n));
  IndexList all(n);
  for (int j = 0; j < n; ++j) all[j] = j;

  for (int attempt = 0; attempt < 3; ++attempt) {
    Matrix w(n, r);
    for (int c = 0; c < r; ++c)
      for (int i = 0; i < n; ++i) w(i, c) = rng.gauss();

    Potentials pot = evaluate(h, w, opts);
    Matrix u = unpermute(h.tree, pot.u);
    rep.eval_flops = pot.flops;
    rep.eval_seconds = pot.seconds;

    Matrix exact = oracle.block(rep.sample_rows, all) * w;
    double num = 0.0, den = 0.0;
    std::vector<double> row_rel;
    row_rel.reserve(rep.sample_rows.size());
    for (size_t t = 0; t < rep.sample_rows.size(); ++t) {
      double dn = (u.row(rep.sample_rows[t]) - exact.row(t)).norm();
      double de = exact.row(t).norm();
      num += dn * dn;
      den += de * de;
      row_rel.push_back(de > 0 ? dn / de : 0.0);
    }
    if (den == 0.0) continue;  // degenerate right-hand side; resample
    rep.eps2 = std::sqrt(num / den);
    rep.per_entry.assign(row_rel.begin(),
                         row_rel.begin() + std::min<size_t>(10, row_rel.size()));
    rep.mean_sample =
        std::accumulate(row_rel.begin(), row_rel.end(), 0.0) / row_rel.size();
    return rep;
  }
  throw numeric_error("error_eps2: sampled rows of Kw vanished repeatedly");
}

inline void print_eval_stats(std::ostream& os, const ErrorReport& rep) {
  os << "eval_flops=" << rep.eval_flops << '\n'
     << "eval_seconds=" << rep.eval_seconds << '\n'
     << "eps2=" << rep.eps2 << '\n';
  os << "eps2_first10=";
  for (size_t i = 0; i < rep.per_entry.size(); ++i)
    os << (i ? "," : "") << rep.per_entry[i];
  os << '\n';
  os << "eps2_mean100=" << rep.mean_sample << '\n';
}

}  // namespace gfmm

#endif  // GFMM_EVALUATE_HPP
