// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <unistd.h>

#include "star/classifier.hpp"
#include "star/contrastive.hpp"
#include "star/data_io.hpp"
#include "star/error.hpp"
#include "star/nn.hpp"
#include "star/pipeline.hpp"
#include "star/set_encoder.hpp"
#include "star/transport.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace star;

namespace {

struct Outcome {
  bool pass = false;
  bool skipped = false;
  std::string detail;
};

int failures = 0;
std::vector<int> known_failures;  // --known-failure=<id>; still printed as FAIL
int unexpected = 0;

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.skipped) {
    std::printf("[%d] SKIP %s (%s)\n", id, name, o.detail.c_str());
    std::fflush(stdout);
    return;
  }
  const bool in_time = secs < limit_s;
  const bool ok = o.pass && in_time;
  if (!ok) {
    ++failures;
    if (std::find(known_failures.begin(), known_failures.end(), id) == known_failures.end()) ++unexpected;
  }
  std::printf("[%d] %s %s (%s; %.2fs of %.0fs%s)\n", id, ok ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
              limit_s, in_time ? "" : ", over time budget");
  std::fflush(stdout);
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---- gradients

Outcome gradient_suite() {
  Rng rng(11);
  double worst = 0.0;

  {
    const std::size_t n = 4;
    const Matrix x = random_matrix(2 * n, 6, rng);
    nn::Linear enc = nn::Linear::create(6, 5, rng);
    nn::MlpProjector proj = nn::MlpProjector::create(5, 4, 3, rng);
    std::vector<nn::Tensor> params{enc.weight, proj.w1, proj.b1, proj.w2, proj.b2};
    auto loss = [&] {
      const nn::Tensor h = enc.forward(nn::constant(x));
      return infonce_loss(nn::l2_normalize_rows(proj.forward(h)), cross_view_partners(n), 0.5);
    };
    worst = std::max(worst, nn::finite_difference_check(loss, params));
  }
  {
    const Matrix members = random_matrix(12, 5, rng);
    DeepSetsEncoder set_fn{nn::MlpProjector::create(5, 4, 4, rng)};
    nn::MlpProjector proj = nn::MlpProjector::create(4, 4, 3, rng);
    const std::vector<std::vector<std::size_t>> groups{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}, {10, 11}};
    std::vector<nn::Tensor> params{set_fn.mlp.w1, set_fn.mlp.b1, set_fn.mlp.w2, set_fn.mlp.b2,
                                   proj.w1,       proj.b1,       proj.w2,       proj.b2};
    auto loss = [&] {
      const nn::Tensor s = deepsets_encode(set_fn, nn::constant(members), groups);
      return infonce_loss(nn::l2_normalize_rows(proj.forward(s)), adjacent_partners(3), 0.5);
    };
    worst = std::max(worst, nn::finite_difference_check(loss, params));
  }
  {
    const std::size_t m = 10, d = 4, classes = 3;
    const Matrix x = random_matrix(m, d, rng);
    Matrix targets(m, classes);
    for (std::size_t i = 0; i < m; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += targets(i, c) = rng.uniform(0.1, 1.0);
      for (std::size_t c = 0; c < classes; ++c) targets(i, c) /= total;
    }
    nn::Tensor w = nn::parameter(random_matrix(d, classes, rng, 0.3));
    nn::Tensor b = nn::parameter(random_matrix(1, classes, rng, 0.3));
    std::vector<nn::Tensor> params{w, b};
    auto loss = [&] {
      const nn::Tensor ce = soft_cross_entropy(nn::add_row_bias(nn::matmul(nn::constant(x), w), b), targets);
      return nn::add(ce, nn::scale(nn::sum_squares(w), 1e-3));
    };
    worst = std::max(worst, nn::finite_difference_check(loss, params));
  }
  return {worst < 1e-4, false, fmt("max relative error %.3g, need < 1e-4", worst)};
}

// ---- sinkhorn

Outcome sinkhorn_suite() {
  Rng rng(23);
  double worst_residual = 0.0;
  std::size_t worst_iters = 0, unconverged = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t r = 1 + rng.below(25), c = 1 + rng.below(50);
    Matrix cost(r, c);
    for (double& v : cost.values()) v = rng.uniform();
    const TransportPlan p = sinkhorn(cost, {0.1, 1e-6, 1000});
    if (!p.converged) ++unconverged;
    worst_residual = std::max(worst_residual, marginal_residual(p.plan));
    worst_iters = std::max(worst_iters, p.iterations);
  }
  double worst_gap = 0.0;
  for (int t = 0; t < 10; ++t) {
    Matrix cost(2, 3);
    for (double& v : cost.values()) v = rng.uniform(0.0, 1.0);
    const TransportPlan p = sinkhorn(cost, {1e-3, 1e-6, 1000});
    const double lp = oracle::lp_optimum_2x3(cost);
    worst_gap = std::max(worst_gap, std::abs(transport_cost(p, cost) - lp) / lp);
  }
  const bool ok = unconverged == 0 && worst_residual <= 1e-6 && worst_iters <= 1000 && worst_gap <= 0.01;
  return {ok, false,
          fmt("residual %.3g, %.0f iterations max, %.0f unconverged; LP gap %.4f%%", worst_residual,
              static_cast<double>(worst_iters), static_cast<double>(unconverged), 100.0 * worst_gap)};
}

// ---- invariances

Outcome invariance_suite() {
  Rng rng(31);
  DeepSetsEncoder set_fn{nn::MlpProjector::create(6, 8, 5, rng)};
  const Matrix members = random_matrix(10, 6, rng);
  const Matrix ref = deepsets_encode(set_fn, members);
  double perm_err = 0.0;
  std::vector<std::size_t> order(members.rows());
  for (int t = 0; t < 100; ++t) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    perm_err = std::max(perm_err, max_abs_diff(ref, deepsets_encode(set_fn, gather_rows(members, order))));
  }

  Matrix pair(2, 3);
  pair(0, 0) = 1.0;
  pair(1, 1) = 1.0;
  const double two_rows = infonce_loss({pair, cross_view_partners(1), 0.5});
  double equal_err = 0.0;
  for (std::size_t n : {2u, 3u, 8u}) {
    Matrix same(2 * n, 4, 0.5);
    const double got = infonce_loss({same, cross_view_partners(n), 0.5});
    equal_err = std::max(equal_err, std::abs(got - std::log(2.0 * n - 1.0)));
  }

  std::size_t outside = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t ns = 2 + rng.below(20), nq = 2 + rng.below(40), d = 1 + rng.below(8);
    const Matrix support = random_matrix(ns, d, rng, 3.0);
    const Matrix query = random_matrix(nq, d, rng, 3.0);
    const TransportPlan p = sinkhorn(pairwise_cost(support, query));
    const Matrix labels = one_hot(std::vector<std::size_t>(ns, 0), 1);
    const Matrix moved = transport_support(p, support, labels).embeddings;
    for (std::size_t c = 0; c < d; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t s = 0; s < ns; ++s) lo = std::min(lo, support(s, c)), hi = std::max(hi, support(s, c));
      for (std::size_t q = 0; q < nq; ++q)
        if (!(moved(q, c) >= lo && moved(q, c) <= hi)) ++outside;
    }
  }
  const bool ok = perm_err <= 1e-6 && std::abs(two_rows) <= 1e-9 && equal_err <= 1e-9 && outside == 0;
  return {ok, false,
          fmt("permutation %.3g, 2-row loss %.3g, equal-sim error %.3g, %.0f coordinates outside envelope",
              perm_err, std::abs(two_rows), equal_err, static_cast<double>(outside))};
}

// ---- SBM ablation and shift

struct SbmRun {
  Dataset data;
  RunConfig cfg;
  FinalEmbeddings full;
};

SbmRun& sbm_run() {
  static SbmRun run = [] {
    SbmRun r;
    SbmSpec spec;
    r.data.graph = generate_sbm(spec);
    for (std::size_t b = 0; b < spec.blocks; ++b) r.data.split.test.push_back(static_cast<int>(b));
    r.cfg.episodes = 200;
    r.cfg.repetitions = 1;
    return r;
  }();
  return run;
}

Outcome sbm_ablation() {
  SbmRun& run = sbm_run();
  const Graph& g = run.data.graph;
  const std::vector<int>& labels = *g.labels;
  auto train_and_score = [&](RunConfig cfg, FinalEmbeddings* keep) {
    const TrainResult tr = meta_train(g, cfg);
    FinalEmbeddings e = embed(g, tr.params, cfg);
    const double acc = meta_test(e.z, labels, run.data.split, cfg).mean_accuracy;
    if (keep) *keep = std::move(e);
    return acc;
  };
  const double full = train_and_score(run.cfg, &run.full);
  RunConfig c = run.cfg;
  c.no_ot = true;
  const double no_ot = meta_test(run.full.z, labels, run.data.split, c).mean_accuracy;
  c = run.cfg;
  c.no_set = true;
  const double no_set = train_and_score(c, nullptr);
  c = run.cfg;
  c.no_instance = true;
  const double no_instance = train_and_score(c, nullptr);
  const double baseline = nearest_centroid_baseline(g.features, labels, run.data.split, run.cfg).mean_accuracy;

  const double slack = 0.005, margin = 0.02;
  const bool ok = full >= no_ot - slack && full >= no_set - slack && full >= no_instance - slack &&
                  full >= baseline + margin;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "full %.2f%%, no_ot %.2f%%, no_set %.2f%%, no_instance %.2f%%, raw nearest-centroid %.2f%%",
                100 * full, 100 * no_ot, 100 * no_set, 100 * no_instance, 100 * baseline);
  return {ok, false, buf};
}

Outcome shift_mitigation() {
  SbmRun& run = sbm_run();
  if (run.full.z.empty()) {
    const TrainResult tr = meta_train(run.data.graph, run.cfg);
    run.full = embed(run.data.graph, tr.params, run.cfg);
  }
  const Diagnostics d =
      diagnose(run.full.z, embedding_meta(run.cfg, run.full), *run.data.graph.labels, run.data.split, run.cfg, 50);
  return {d.median_energy_after < d.median_energy_before, false,
          fmt("median energy distance %.4f after vs %.4f before over %.0f episodes", d.median_energy_after,
              d.median_energy_before, static_cast<double>(d.shifts.size()))};
}

// ---- real data

Outcome real_data() {
  const char* dir = std::getenv("STAR_CORA_DIR");
  if (!dir || !fs::exists(dir)) return {false, true, "STAR_CORA_DIR not set or missing; no Cora-format dataset"};
  const Dataset ds = load_dataset(dir);
  require(ds.graph.labels.has_value(), "dataset has no labels");
  RunConfig cfg;
  cfg.n_way = 2;
  cfg.k_shot = 5;
  const TrainResult tr = meta_train(ds.graph, cfg);
  const FinalEmbeddings e = embed(ds.graph, tr.params, cfg);
  const double acc = meta_test(e.z, *ds.graph.labels, ds.split, cfg).mean_accuracy;
  return {acc >= 0.80, false, fmt("2-way 5-shot pooled accuracy %.2f%%, need >= 80%%", 100 * acc)};
}

// ---- determinism

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + STAR_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("star_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  write_text_file((root / "spec.json").string(),
                  R"({"blocks":3,"nodes_per_block":60,"p_in":0.1,"p_out":0.01,"feature_dim":16,"seed":3})");
  write_text_file((root / "cfg.json").string(), R"({"max_epochs":40,"n_way":3,"episodes":10,"repetitions":2})");
  std::vector<std::string> payloads;
  for (int r = 0; r < 2; ++r) {
    const std::string d = (root / ("run" + std::to_string(r))).string();
    const std::string cfg = (root / "cfg.json").string();
    int rc = run_cli("synth --spec " + (root / "spec.json").string() + " --out " + d + "/data");
    rc |= run_cli("pretrain --quiet --data " + d + "/data --config " + cfg + " --out " + d + "/ckpt");
    rc |= run_cli("embed --data " + d + "/data --ckpt " + d + "/ckpt --out " + d + "/z.bin");
    rc |= run_cli("eval --data " + d + "/data --emb " + d + "/z.bin --config " + cfg + " --out " + d +
                  "/metrics.json");
    if (rc != 0) return {false, false, "CLI run failed"};
    payloads.push_back(read_text_file(d + "/metrics.json"));
  }
  fs::remove_all(root);
  return {payloads[0] == payloads[1] && !payloads[0].empty(), false,
          payloads[0] == payloads[1] ? "metrics.json byte-identical across runs" : "metrics.json differs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string flag = "--known-failure=";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind(flag, 0) == 0) known_failures.push_back(std::stoi(a.substr(flag.size())));
  }
  report(1, "gradient suite", 10, gradient_suite);
  report(2, "sinkhorn suite", 5, sinkhorn_suite);
  report(3, "invariance suite", 60, invariance_suite);
  report(4, "SBM ablation ordering", 300, sbm_ablation);
  report(5, "shift mitigation", 60, shift_mitigation);
  report(6, "real-data check", 600, real_data);
  report(7, "determinism", 300, determinism);
  std::printf("%d criteria failed, %d unexpected\n", failures, unexpected);
  return unexpected == 0 ? 0 : 1;
}
