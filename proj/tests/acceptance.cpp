// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "mcdl/baselines.hpp"
#include "mcdl/bundle.hpp"
#include "mcdl/cluster.hpp"
#include "mcdl/mcdm.hpp"
#include "mcdl/neuralnet.hpp"
#include "mcdl/pipeline.hpp"
#include "mcdl/stream.hpp"
#include "mcdl/synthetic.hpp"
#include "oracles.hpp"

using namespace mcdl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct RandomGraph {
  AgentGraph graph;
  std::vector<oracle::PlainAgent> plain;
};

RandomGraph random_graph(Rng& rng, std::size_t max_agents, double b_lo, double b_hi) {
  const std::size_t n = 1 + rng.index(max_agents);
  std::vector<Agent> agents;
  RandomGraph out;
  for (std::size_t i = 0; i < n; ++i) {
    Agent a;
    a.id = static_cast<int>(i * 3 + rng.index(3));
    a.b = rng.uniform(b_lo, b_hi);
    agents.push_back(a);
  }
  for (auto& a : agents) {
    for (const auto& o : agents) {
      if (o.id != a.id && rng.uniform() < 0.5) a.neighbors.push_back(o.id);
    }
    out.plain.push_back({a.id, a.b, {a.neighbors.begin(), a.neighbors.end()}});
  }
  out.graph = AgentGraph(std::move(agents), rng.uniform(0.5, 8.0));
  return out;
}

Outcome c1_mcdm_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  int order_mismatch = 0;
  for (int g = 0; g < 200; ++g) {
    auto rg = random_graph(rng, 7, -10.0, 10.0);
    for (bool mutual : {false, true}) {
      const auto want = oracle::scores(rg.plain, rg.graph.K(), mutual);
      const auto got = rank(rg.graph, mutual ? Weighting::mutual : Weighting::plain);
      for (const auto& e : got.entries) worst = std::max(worst, std::abs(e.score - want.at(e.id)));
      if (got.order() != oracle::order(want)) ++order_mismatch;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && order_mismatch == 0 && secs < 5.0,
          "max |diff| " + fmt(worst) + ", order mismatches " + std::to_string(order_mismatch) + ", " + fmt(secs) + " s"};
}

Outcome c2_hand_fixture() {
  const AgentGraph g({{1, 2.0, {}, {2}}, {2, 4.0, {}, {}}}, 2.0);
  const double m = mu(2.0, 4.0, g.K());
  const double nb = neighbor_benefit(1, g, Weighting::plain);
  const double B = overall_benefit(1, g, Weighting::plain);
  return {m == 3.0 && nb == 12.0 && B == 14.0,
          "mu_12 = " + format_double(m) + ", b(N_1) = " + format_double(nb) + ", B(a_1) = " + format_double(B)};
}

oracle::Net to_oracle(const Mlp& m) {
  oracle::Net n;
  for (const auto& l : m.layers) {
    std::vector<std::vector<double>> w(l.out, std::vector<double>(l.in));
    for (std::size_t o = 0; o < l.out; ++o) {
      for (std::size_t i = 0; i < l.in; ++i) w[o][i] = l.weights[o * l.in + i];
    }
    n.w.push_back(w);
    n.b.push_back(l.bias);
  }
  return n;
}

Outcome c3_gradients() {
  const auto t0 = Clock::now();
  Rng rng(3003);
  int nets = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; nets < 60; ++seed) {
    const std::size_t in = 1 + rng.index(3), hidden = 1 + rng.index(3), out = 1 + rng.index(2);
    const Mlp model = Mlp::create({in, hidden, out}, seed);
    if (model.parameter_count() > 20) continue;
    Matrix x, y;
    const std::size_t batch = 1 + rng.index(6);
    for (std::size_t b = 0; b < batch; ++b) {
      Vector xi(in), yi(out);
      for (auto& v : xi) v = rng.normal();
      for (auto& v : yi) v = rng.normal();
      x.push_back(xi);
      y.push_back(yi);
    }
    const Mlp g = gradient(model, x, y);
    const double h = 1e-5;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      auto probe = [&](auto pick) {
        Mlp plus = model, minus = model;
        pick(plus) += h;
        pick(minus) -= h;
        const double fd = (oracle::loss(to_oracle(plus), x, y) - oracle::loss(to_oracle(minus), x, y)) / (2 * h);
        Mlp gc = g;
        const double an = pick(gc);
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7}));
      };
      for (std::size_t k = 0; k < model.layers[l].weights.size(); ++k) {
        probe([&](Mlp& m) -> double& { return m.layers[l].weights[k]; });
      }
      for (std::size_t k = 0; k < model.layers[l].bias.size(); ++k) {
        probe([&](Mlp& m) -> double& { return m.layers[l].bias[k]; });
      }
    }
    ++nets;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 10.0,
          std::to_string(nets) + " networks, max rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome c4_kmeans() {
  std::vector<std::pair<Matrix, std::size_t>> fixtures{{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}, 2}};
  Rng rng(4004);
  for (int t = 0; t < 90; ++t) {
    const std::size_t k = 1 + static_cast<std::size_t>(t % 3);
    const std::size_t n = k + rng.index(9 - k);
    Matrix pts;
    while (pts.size() < n) {
      Vector p{std::round(rng.uniform(0, 30)), std::round(rng.uniform(0, 30))};
      if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
    }
    fixtures.push_back({pts, k});
  }
  std::vector<std::uint64_t> seeds(20);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = 500 + i;
  int suboptimal = 0, increases = 0, runs = 0;
  for (const auto& [pts, k] : fixtures) {
    const double best = oracle::best_wcss(pts, static_cast<int>(k));
    double found = std::numeric_limits<double>::infinity();
    for (auto s : seeds) {
      const auto r = kmeans(pts, k, s);
      ++runs;
      found = std::min(found, r.wcss);
      for (std::size_t i = 1; i < r.wcss_history.size(); ++i) {
        if (r.wcss_history[i] > r.wcss_history[i - 1] * (1 + 1e-12)) ++increases;
      }
    }
    if (found > best + 1e-9 * std::max(1.0, best)) ++suboptimal;
  }
  return {suboptimal == 0 && increases == 0,
          std::to_string(fixtures.size()) + " fixtures, " + std::to_string(runs) + " runs, suboptimal " +
              std::to_string(suboptimal) + ", WCSS increases " + std::to_string(increases)};
}

Outcome c5_online_offline() {
  PipelineConfig cfg;
  SnapshotStore store;
  const auto data = synthetic::blobs(synthetic::four_blobs(), 100, 42);
  const auto snap = batch_layer_run(data, cfg, store);
  const auto stream = synthetic_stream(snap->pipeline, 10000, 5005);
  SpeedLayer layer(snap, cfg.stream.window, cfg.stream.warmup);
  std::deque<Vector> ref;
  double worst_dv = 0.0, worst_stat = 0.0;
  std::size_t scored = 0;
  for (const auto& r : stream) {
    ref.push_back(r.features);
    if (ref.size() > cfg.stream.window) ref.pop_front();
    double dv = std::numeric_limits<double>::quiet_NaN();
    if (ref.size() < cfg.stream.warmup) {
      layer.observe(r);
    } else {
      dv = layer.score(r).decision_value;
      ++scored;
    }
    NormParams fresh;
    for (std::size_t f = 0; f < r.features.size(); ++f) {
      std::vector<double> col;
      for (const auto& row : ref) col.push_back(row[f]);
      const auto [m, s] = oracle::mean_delta(col);
      worst_stat = std::max({worst_stat, std::abs(layer.window().mean(f) - m), std::abs(layer.window().delta(f) - s)});
      fresh.mean.push_back(m);
      fresh.delta.push_back(s);
      fresh.constant.push_back(s == 0.0);
    }
    if (!std::isnan(dv)) worst_dv = std::max(worst_dv, std::abs(dv - snap->pipeline.decision_value_for(r.features, fresh)));
  }
  return {worst_dv <= 1e-9 && worst_stat <= 1e-9 && scored > 9000,
          std::to_string(stream.size()) + " records, " + std::to_string(scored) + " scored, max |dv diff| " +
              fmt(worst_dv) + ", max |stat diff| " + fmt(worst_stat)};
}

Outcome c6_reductions() {
  Rng rng(6006);
  double ridge_gap = 0.0;
  bool mink_exact = true, knn_zero = true, r2_ok = true;
  for (int t = 0; t < 20; ++t) {
    Matrix x(50, Vector(3));
    Vector y;
    for (auto& r : x) {
      for (auto& v : r) v = rng.normal();
      y.push_back(2 * r[0] - r[1] + 0.3 * r[2] + 0.1 * rng.normal());
    }
    const auto a = ridge_regress(x, y, 0.0), b = ols_regress(x, y);
    for (int f = 0; f < 3; ++f) ridge_gap = std::max(ridge_gap, std::abs(a.weights[f] - b.weights[f]));
    ridge_gap = std::max(ridge_gap, std::abs(a.intercept - b.intercept));
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      mink_exact &= minkowski_distance(x[i], x[i + 1], 1.0) == manhattan_distance(x[i], x[i + 1]);
      mink_exact &= minkowski_distance(x[i], x[i + 1], 2.0) == euclidean_distance(x[i], x[i + 1]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) knn_zero &= knn_regress(x, y, x[i], 1, DistanceMetric::euclidean()) == y[i];
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    r2_ok &= evaluate_regression(y, y).score == 1.0;
    r2_ok &= evaluate_regression(Vector(y.size(), mean), y).score == 0.0;
  }
  return {ridge_gap <= 1e-8 && mink_exact && knn_zero && r2_ok,
          "ridge/OLS gap " + fmt(ridge_gap) + ", minkowski exact " + (mink_exact ? "yes" : "no") + ", knn k=1 zero error " +
              (knn_zero ? "yes" : "no") + ", R2 perfect=1 mean=0 " + (r2_ok ? "yes" : "no")};
}

Outcome c7_tables() {
  BenchReport r;
  r.numerical = make_numerical_table();
  for (const auto& name : regression_techniques()) r.numerical.rows.push_back({name, 0.0, 0.0, {}});
  r.numerical.rows.back().first = -0.0123;
  r.numerical.rows.back().second = 586.369;
  BenchTable cat = make_categorical_table();
  for (const auto& name : classification_techniques()) cat.rows.push_back({name, 0.0, 0.0, {}});
  cat.rows[2].first = 0.43;
  cat.rows[2].second = 0.98;
  r.categorical = cat;
  std::ostringstream md;
  render_markdown(md, r);
  const auto s = md.str();
  const bool headers = s.find("| Techniques applied | Statistical analysis | Estimation error |") != std::string::npos &&
                       s.find("| Techniques applied | Precision value | Accuracy |") != std::string::npos;
  const bool bottom = r.numerical.rows.back().technique == "Proposed MLDM";
  const bool values = s.find("| Proposed MLDM | -0.0123 | 586.369 |") != std::string::npos &&
                      s.find("| Decision tree | 0.43 | 0.98 |") != std::string::npos;
  return {headers && bottom && values, std::string("headers ") + (headers ? "ok" : "missing") + ", bottom row " +
                                           (bottom ? "ok" : "wrong") + ", fixture values " + (values ? "verbatim" : "altered")};
}

Outcome c8_latency() {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  SnapshotStore store;
  const auto snap = batch_layer_run(synthetic::blobs(synthetic::four_blobs(), 100, 42), cfg, store);
  const auto stream = synthetic_stream(snap->pipeline, 10000, 8008);
  LatencyConfig lc;
  lc.workers = {1, 2, 4, 8};
  lc.repetitions = 5;
  const auto reports = run_latency_experiment(snap, stream, lc);
  bool monotone = true;
  std::string curve;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0 && reports[i].wall_us_per_record > reports[i - 1].wall_us_per_record) monotone = false;
    curve += (i ? ", " : "") + std::to_string(reports[i].workers) + "w " + fmt(reports[i].wall_us_per_record) + " us";
  }
  const auto j = latency_json(reports);
  const bool reported = j.at("paper_reference_overhead_pct").get<double>() == 4.9 && j["reports"][0].contains("overhead_pct");
  const double secs = seconds_since(t0);
  return {monotone && reported && secs < 120.0,
          curve + "; overhead_pct " + fmt(reports[0].overhead_pct) + " (reference 4.9, not asserted); " + fmt(secs) + " s"};
}

Outcome c9_determinism() {
  const fs::path root = fs::path(MCDL_TEST_TMP) / "acceptance";
  fs::remove_all(root);
  PipelineConfig cfg;
  const auto data = synthetic::blobs(synthetic::four_blobs(), 100, 42);
  write_bundle(root / "a", train_pipeline(data, cfg));
  write_bundle(root / "b", train_pipeline(data, cfg));
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    if (read_text_file(e.path()) != read_text_file(root / "b" / e.path().filename())) ++differ;
  }
  std::size_t files_b = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(root / "b")) ++files_b;
  return {differ == 0 && files == files_b && files > 0,
          std::to_string(files) + " files compared, " + std::to_string(differ) + " differ"};
}

Outcome c10_scaling() {
  Rng rng(1010);
  int changed = 0, graphs = 0;
  for (; graphs < 100; ++graphs) {
    auto rg = random_graph(rng, 8, 0.0, 10.0);
    const double c = rng.uniform(0.05, 20.0);
    const auto scaled = rg.graph.scaled(c);
    for (auto w : {Weighting::plain, Weighting::mutual}) {
      if (rank(rg.graph, w).order() != rank(scaled, w).order()) {
        ++changed;
        break;
      }
    }
  }
  return {changed == 0, std::to_string(graphs) + " graphs, order changed on " + std::to_string(changed) +
                            " (neighbor term scales by c^2, own benefit by c)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"MCDM oracle equivalence", c1_mcdm_oracle},
      {"hand-derived MCDM fixture", c2_hand_fixture},
      {"gradient correctness", c3_gradients},
      {"k-means optimality at micro scale", c4_kmeans},
      {"online/offline equivalence", c5_online_offline},
      {"baseline reductions", c6_reductions},
      {"table-shape fixtures", c7_tables},
      {"latency trend", c8_latency},
      {"end-to-end determinism", c9_determinism},
      {"ranking order invariance under benefit scaling", c10_scaling},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first << " (" << o.detail
              << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
