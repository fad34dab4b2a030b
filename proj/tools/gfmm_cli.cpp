// Command-line driver: matrix generators and files in, compression and
// fast-matvec reports out.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gfmm/gfmm.hpp"

namespace {

struct SourceFlags {
  std::string gen;
  std::string matrix_path;
  std::string points_path;
  int n = 4096;
  int d = 6;
  double bandwidth = 1.0;
  double delta = -1.0;  // laplace floor; <0 means use the sampled default
  double shift = 1.0;
  int degree = 2;
  double ridge = 1e-8;
  double lambda = 1.0;  // stencil regularization
  std::uint64_t seed = 0;
};

void add_source_flags(CLI::App* cmd, SourceFlags& src) {
  cmd->set_help_flag("--help", "print help");  // frees -h/--h for the bandwidth
  cmd->add_option("--gen", src.gen, "generator: gaussian|laplace|poly|cosine|invsqlap|randspd");
  cmd->add_option("--matrix", src.matrix_path, "dense matrix file (GFMM format)");
  cmd->add_option("--points", src.points_path, "coordinate file (GPTS format)");
  cmd->add_option("--n", src.n, "problem size N");
  cmd->add_option("--d", src.d, "point dimension for generated clouds");
  cmd->add_option("--h", src.bandwidth, "gaussian bandwidth");
  cmd->add_option("--delta", src.delta, "laplace distance floor (default: sampled)");
  cmd->add_option("--shift", src.shift, "polynomial kernel shift c");
  cmd->add_option("--degree", src.degree, "polynomial kernel degree p");
  cmd->add_option("--ridge", src.ridge, "cosine kernel diagonal ridge");
  cmd->add_option("--lambda", src.lambda, "inverse-squared-laplacian shift");
  cmd->add_option("--seed", src.seed, "random seed");
}

struct Source {
  std::unique_ptr<gfmm::EntryOracle> oracle;
  std::optional<gfmm::PointCloud> points;
};

Source make_source(const SourceFlags& src) {
  Source out;
  if (!src.matrix_path.empty()) {
    out.oracle = gfmm::file_oracle(src.matrix_path);
    return out;
  }
  if (src.gen.empty())
    throw std::invalid_argument("either --gen or --matrix is required");

  if (src.gen == "invsqlap") {
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(src.n))));
    if (side * side != src.n)
      throw std::invalid_argument("--n must be a perfect square for invsqlap");
    out.oracle = gfmm::inverse_sq_laplacian_oracle(side, src.lambda);
    return out;
  }
  if (src.gen == "randspd") {
    out.oracle = gfmm::random_spd_oracle(src.n, src.seed);
    return out;
  }

  gfmm::PointCloud pc = src.points_path.empty()
                            ? gfmm::PointCloud::random_gaussian(src.n, src.d, src.seed)
                            : gfmm::read_points_file(src.points_path);
  if (src.gen == "gaussian") {
    out.oracle = gfmm::gaussian_kernel_oracle(pc, src.bandwidth);
  } else if (src.gen == "laplace") {
    double delta = src.delta >= 0 ? src.delta : gfmm::default_laplace_floor(pc, src.seed);
    out.oracle = gfmm::laplace_kernel_oracle(pc, delta);
  } else if (src.gen == "poly") {
    out.oracle = gfmm::polynomial_kernel_oracle(pc, src.shift, src.degree);
  } else if (src.gen == "cosine") {
    out.oracle = gfmm::cosine_kernel_oracle(pc, src.ridge);
  } else {
    throw std::invalid_argument("unknown generator: " + src.gen);
  }
  out.points = std::move(pc);
  return out;
}

gfmm::DistanceKind parse_dist(const std::string& s) {
  if (s == "geom") return gfmm::DistanceKind::GeometricL2;
  if (s == "kernel") return gfmm::DistanceKind::KernelL2;
  if (s == "angle") return gfmm::DistanceKind::Angle;
  throw std::invalid_argument("unknown distance kind: " + s);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw std::invalid_argument("empty list: " + s);
  return out;
}

// Reporting precision knob: matrices stay double internally; --f32 rounds
// reported error values through single precision.
double report_value(double v, bool f32) {
  return f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

int cmd_compress(const SourceFlags& src, const gfmm::RunConfig& cfg,
                 const std::string& mode, bool f32) {
  Source source = make_source(src);
  gfmm::HMatrix h = gfmm::compress(*source.oracle,
                                   source.points ? &*source.points : nullptr, cfg);

  for (size_t i = 0; i < h.stats.ann_recall.size(); ++i)
    std::cout << "ann_recall_iter_" << (i + 1) << "=" << h.stats.ann_recall[i] << "\n";
  std::cout << "tree_seconds=" << h.stats.tree_seconds << "\n";
  gfmm::print_compress_stats(std::cout, h.stats);

  gfmm::EvalOptions opts;
  opts.mode = (mode == "levels") ? gfmm::TraversalMode::LevelByLevel
                                 : gfmm::TraversalMode::TaskDag;
  opts.threads = cfg.threads;
  gfmm::ErrorReport rep =
      gfmm::error_eps2(h, *source.oracle, cfg.r, std::min(100, h.n), cfg.seed, opts);
  if (f32) {
    rep.eps2 = report_value(rep.eps2, true);
    rep.mean_sample = report_value(rep.mean_sample, true);
    for (double& v : rep.per_entry) v = report_value(v, true);
  }
  gfmm::print_eval_stats(std::cout, rep);
  return 0;
}

int cmd_ann(const SourceFlags& src, int kappa, int m, int iters,
            const std::string& dist, int threads, const std::string& out_path) {
  Source source = make_source(src);
  gfmm::Metric metric(parse_dist(dist), *source.oracle,
                      source.points ? &*source.points : nullptr);
  gfmm::AnnResult res =
      gfmm::ann_search(metric, kappa, m, iters, src.seed, 10, threads);
  for (size_t i = 0; i < res.recall_per_iteration.size(); ++i)
    std::cout << "ann_recall_iter_" << (i + 1) << "=" << res.recall_per_iteration[i] << "\n";
  if (!out_path.empty()) gfmm::write_neighbor_file(out_path, res.table);
  return 0;
}

int cmd_gen(const SourceFlags& src, const std::string& out_points,
            const std::string& out_matrix) {
  if (out_points.empty() && out_matrix.empty())
    throw std::invalid_argument("gen requires --out-points and/or --out-matrix");
  Source source = make_source(src);
  if (!out_points.empty()) {
    if (!source.points)
      throw std::invalid_argument("--out-points needs a point-based generator");
    gfmm::write_points_file(out_points, *source.points);
  }
  if (!out_matrix.empty()) {
    int n = source.oracle->size();
    if (n > gfmm::kDeskScaleCap)
      throw gfmm::io_error("matrix too large to materialize");
    gfmm::IndexList all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    gfmm::write_matrix_file(out_matrix, source.oracle->block(all, all));
  }
  return 0;
}

int cmd_bench(const SourceFlags& src_template, gfmm::RunConfig cfg,
              const std::string& n_list, const std::string& r_list) {
  std::vector<int> ns = parse_int_list(n_list);
  std::vector<int> rs = parse_int_list(r_list);
  std::cout << "N,r,dense_seconds,compress_seconds,eval_seconds,speedup\n";
  for (int n : ns) {
    if (n > gfmm::kDeskScaleCap)
      throw gfmm::io_error("bench N exceeds desk-scale cap");
    SourceFlags src = src_template;
    src.n = n;
    Source source = make_source(src);

    gfmm::IndexList all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    gfmm::Matrix k = source.oracle->block(all, all);

    gfmm::HMatrix h = gfmm::compress(*source.oracle,
                                     source.points ? &*source.points : nullptr, cfg);
    gfmm::EvalOptions opts;
    opts.threads = cfg.threads;

    for (int r : rs) {
      gfmm::Rng rng(cfg.seed, 0xbe7c);
      gfmm::Matrix w(n, r);
      for (int c = 0; c < r; ++c)
        for (int i = 0; i < n; ++i) w(i, c) = rng.gauss();

      auto t0 = std::chrono::steady_clock::now();
      gfmm::Matrix dense_u = k * w;
      double dense_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      gfmm::Potentials pot = gfmm::evaluate(h, w, opts);
      std::printf("%d,%d,%.6f,%.6f,%.6f,%.3f\n", n, r, dense_s,
                  h.stats.compress_seconds, pot.seconds, dense_s / pot.seconds);
      // keep the optimizer from discarding the dense product
      if (!dense_u.allFinite()) throw gfmm::numeric_error("dense reference overflowed");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical SPD matrix compression and fast matvec"};
  app.require_subcommand(1);

  SourceFlags src;
  gfmm::RunConfig cfg;
  std::string dist = "kernel";
  std::string mode = "tasks";
  bool f32 = false;
  std::string out_points, out_matrix, out_neighbors;
  std::string n_list = "2048,4096", r_list = "64";

  auto* c_compress = app.add_subcommand("compress", "compress and evaluate accuracy");
  add_source_flags(c_compress, src);
  c_compress->add_option("--m", cfg.m, "leaf size");
  c_compress->add_option("--s", cfg.s, "maximum skeleton rank");
  c_compress->add_option("--tau", cfg.tau, "adaptive tolerance");
  c_compress->add_option("--k", cfg.kappa, "neighbors per index");
  c_compress->add_option("--budget", cfg.budget, "near-field budget in [0,1]");
  c_compress->add_option("--dist", dist, "distance kind: geom|kernel|angle");
  c_compress->add_option("--threads", cfg.threads, "worker threads");
  c_compress->add_option("--r", cfg.r, "right-hand-side columns");
  c_compress->add_option("--iters", cfg.ann_iterations, "neighbor-search iterations");
  c_compress->add_option("--mode", mode, "traversal mode: levels|tasks");
  c_compress->add_flag("--f32", f32, "report error values in single precision");

  auto* c_bench = app.add_subcommand("bench", "crossover benchmark vs dense matvec (CSV)");
  add_source_flags(c_bench, src);
  c_bench->add_option("--m", cfg.m, "leaf size");
  c_bench->add_option("--s", cfg.s, "maximum skeleton rank");
  c_bench->add_option("--tau", cfg.tau, "adaptive tolerance");
  c_bench->add_option("--k", cfg.kappa, "neighbors per index");
  c_bench->add_option("--budget", cfg.budget, "near-field budget in [0,1]");
  c_bench->add_option("--dist", dist, "distance kind: geom|kernel|angle");
  c_bench->add_option("--threads", cfg.threads, "worker threads");
  c_bench->add_option("--iters", cfg.ann_iterations, "neighbor-search iterations");
  c_bench->add_option("--n-list", n_list, "comma-separated problem sizes");
  c_bench->add_option("--r-list", r_list, "comma-separated RHS column counts");

  auto* c_gen = app.add_subcommand("gen", "write generated matrices/points to files");
  add_source_flags(c_gen, src);
  c_gen->add_option("--out-points", out_points, "output coordinate file");
  c_gen->add_option("--out-matrix", out_matrix, "output dense matrix file");

  auto* c_ann = app.add_subcommand("ann", "run the neighbor search and report recall");
  add_source_flags(c_ann, src);
  c_ann->add_option("--k", cfg.kappa, "neighbors per index");
  c_ann->add_option("--m", cfg.m, "leaf size for the randomized trees");
  c_ann->add_option("--iters", cfg.ann_iterations, "iterations");
  c_ann->add_option("--dist", dist, "distance kind: geom|kernel|angle");
  c_ann->add_option("--threads", cfg.threads, "worker threads");
  c_ann->add_option("--out", out_neighbors, "neighbor table dump (GNNT format)");

  try {
    app.parse(argc, argv);
    cfg.seed = src.seed;
    cfg.kind = parse_dist(dist);
    if (mode != "levels" && mode != "tasks")
      throw std::invalid_argument("unknown traversal mode: " + mode);

    if (c_compress->parsed()) {
      cfg.validate();
      return cmd_compress(src, cfg, mode, f32);
    }
    if (c_bench->parsed()) {
      cfg.validate();
      return cmd_bench(src, cfg, n_list, r_list);
    }
    if (c_gen->parsed()) return cmd_gen(src, out_points, out_matrix);
    if (c_ann->parsed())
      return cmd_ann(src, cfg.kappa, cfg.m, cfg.ann_iterations, dist,
                     cfg.threads, out_neighbors);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gfmm::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const gfmm::io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
