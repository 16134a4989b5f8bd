// mcdl: train, rank, bench and stream commands over the header-only library.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcdl/bundle.hpp"
#include "mcdl/config.hpp"
#include "mcdl/ingest.hpp"
#include "mcdl/pipeline.hpp"
#include "mcdl/stream.hpp"
#include "mcdl/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mcdl;

namespace {

struct Options {
  std::string config_path;
  std::string data_path;
  std::string bundle_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<std::string> workers;
  std::optional<std::size_t> records;
  std::vector<std::string> sets;
  // stream
  std::string replay_path;
  // generate
  std::string kind = "blobs";
  std::size_t rows = 400;
  double noise = 0.0;
  bool labels = false;
};

int exit_code(ErrorKind kind) {
  return kind == ErrorKind::io || kind == ErrorKind::config ? 2 : 1;
}

/// Layers file, `--set` pairs, then dedicated flags over `cfg`.
void apply_overrides(PipelineConfig& cfg, const Options& o) {
  if (!o.config_path.empty()) load_config_file(cfg, o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.format) set_config_value(cfg, "io.format", *o.format);
  if (o.workers) set_config_value(cfg, "stream.workers", *o.workers);
  if (o.records) cfg.stream.records = *o.records;
  cfg.validate();
}

bool wants(const PipelineConfig& cfg, const std::string& fmt) { return cfg.io.format == "all" || cfg.io.format == fmt; }

fs::path out_dir(const Options& o) {
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + o.out_dir + "': " + ec.message());
  return o.out_dir;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ConfigError(flag + " is required");
}

template <class Fn>
void write_with(const fs::path& path, Fn fn) {
  std::ostringstream ss;
  fn(ss);
  write_text_file(path, ss.str());
  std::cout << "wrote " << path.string() << '\n';
}

int cmd_train(const Options& o) {
  PipelineConfig cfg;
  apply_overrides(cfg, o);
  require(o.data_path, "--data");
  const Dataset data = load_csv(o.data_path, cfg.schema());
  TrainSummary s;
  const auto p = train_pipeline(data, cfg, &s);
  const fs::path dir = o.bundle_path.empty() ? out_dir(o) / "bundle" : fs::path(o.bundle_path);
  write_bundle(dir, p);
  std::cout << "rows " << s.rows << ", leaves " << s.leaves << ", depth " << s.depth << '\n';
  for (std::size_t l = 0; l < s.leaves; ++l) {
    std::cout << "  leaf " << l << ": size " << s.leaf_sizes[l] << ", final loss " << format_double(s.leaf_final_losses[l])
              << '\n';
  }
  std::cout << "timings ms: normalize " << format_double(s.normalize_ms) << ", cluster " << format_double(s.cluster_ms)
            << ", train " << format_double(s.train_ms) << '\n';
  std::cout << "bundle " << dir.string() << " digest " << pipeline_digest(p) << '\n';
  return 0;
}

int cmd_rank(const Options& o) {
  require(o.bundle_path, "--bundle");
  require(o.data_path, "--data");
  auto p = read_bundle(o.bundle_path);
  apply_overrides(p.config, o);
  CsvSchema schema = p.config.schema();
  schema.features = p.feature_names;
  // Alternatives need not carry a target column.
  std::ifstream probe(o.data_path);
  if (!probe) throw IoError("cannot open data file '" + o.data_path + "'");
  std::string header;
  std::getline(probe, header);
  const auto cols = detail::split_csv_line(header);
  const bool has_target = std::any_of(cols.begin(), cols.end(), [&](const std::string& c) {
    return detail::trim(c) == schema.target;
  });
  Matrix rows;
  if (has_target) {
    rows = load_csv(o.data_path, schema).rows;
  } else {
    std::ifstream in(o.data_path);
    std::ostringstream padded;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (detail::blank(line)) continue;
      padded << line << (first ? "," + schema.target : ",0") << '\n';
      first = false;
    }
    std::istringstream again(padded.str());
    rows = parse_csv(again, schema, o.data_path).rows;
  }
  const auto ranking = rank_alternatives(p, rows);
  const auto dir = out_dir(o);
  if (p.config.io.format != "json") write_with(dir / "ranking.csv", [&](std::ostream& out) { write_ranking_csv(out, ranking); });
  if (wants(p.config, "json")) {
    write_with(dir / "ranking.json", [&](std::ostream& out) { out << ranking_json(ranking).dump(2) << '\n'; });
  }
  const auto n = std::min<std::size_t>(5, ranking.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::cout << (i + 1) << ". agent " << ranking.entries[i].id << "  B = " << format_double(ranking.entries[i].score)
              << '\n';
  }
  return 0;
}

int cmd_bench(const Options& o) {
  PipelineConfig cfg;
  apply_overrides(cfg, o);
  require(o.data_path, "--data");
  const Dataset data = load_csv(o.data_path, cfg.schema());
  const auto report = run_bench(data, cfg);
  const auto dir = out_dir(o);
  if (wants(cfg, "md")) write_with(dir / "bench.md", [&](std::ostream& out) { render_markdown(out, report); });
  if (wants(cfg, "csv")) write_with(dir / "bench.csv", [&](std::ostream& out) { render_csv(out, report); });
  if (wants(cfg, "json")) {
    write_with(dir / "bench.json", [&](std::ostream& out) { out << bench_json(report).dump(2) << '\n'; });
  }
  render_markdown(std::cout, report);
  return 0;
}

int cmd_stream(const Options& o) {
  require(o.bundle_path, "--bundle");
  auto p = read_bundle(o.bundle_path);
  PipelineConfig cfg = p.config;
  apply_overrides(cfg, o);
  const auto& sc = cfg.stream;
  if (sc.records < 1000) {
    std::cerr << "warning: " << sc.records << " records is below 1000; percentiles will be unstable\n";
  }

  std::vector<StreamRecord> records;
  if (!o.replay_path.empty()) {
    std::ifstream in(o.replay_path);
    if (!in) throw IoError("cannot open replay file '" + o.replay_path + "'");
    records = read_stream_csv(in, o.replay_path);
  } else {
    records = synthetic_stream(p, sc.records, mix_seed(cfg.seed, 5000));
  }

  LatencyConfig lc;
  lc.workers = sc.workers;
  lc.repetitions = sc.repetitions;
  lc.window = sc.window;
  lc.warmup = sc.warmup;
  const std::size_t most = *std::max_element(lc.workers.begin(), lc.workers.end());
  const std::size_t shard = records.size() / most;
  if (shard < 2) throw InputError("stream: " + std::to_string(records.size()) + " records cannot feed " +
                                  std::to_string(most) + " workers");
  if (shard <= lc.warmup) {
    lc.warmup = shard - 1;
    std::cerr << "warning: warm-up reduced to " << lc.warmup << " records per worker\n";
  }

  // Reference agents: a synthetic sample of the training distribution.
  SnapshotStore store;
  const auto reference = synthetic_stream(p, std::max<std::size_t>(p.tree.nodes.front().size, cfg.mcdm.neighborhood_k + 1),
                                          mix_seed(cfg.seed, 5001));
  Matrix ref_rows;
  for (const auto& r : reference) ref_rows.push_back(r.features);
  auto snap = snapshot_from_pipeline(std::move(p), ref_rows, store);

  const auto reports = run_latency_experiment(snap, records, lc);
  const auto dir = out_dir(o);
  if (cfg.io.format != "json") write_with(dir / "latency.csv", [&](std::ostream& out) { write_latency_csv(out, reports); });
  if (wants(cfg, "json")) {
    write_with(dir / "latency.json", [&](std::ostream& out) { out << latency_json(reports).dump(2) << '\n'; });
  }
  std::cout << "workers  wall_us/record  p50_us  p95_us  p99_us  overhead_pct\n";
  for (const auto& r : reports) {
    std::cout << r.workers << "  " << format_metric(r.wall_us_per_record) << "  " << format_metric(r.p50_us) << "  "
              << format_metric(r.p95_us) << "  " << format_metric(r.p99_us) << "  " << format_metric(r.overhead_pct)
              << '\n';
  }
  std::cout << "paper_reference_overhead_pct: " << format_double(kReferenceOverheadPct) << " (measured values above)\n";
  return 0;
}

int cmd_generate(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(42);
  Dataset d;
  if (o.kind == "blobs") {
    d = synthetic::blobs(synthetic::four_blobs(), std::max<std::size_t>(1, o.rows / 4), seed, 0.5, o.noise);
  } else if (o.kind == "linear") {
    d = synthetic::linear(o.rows, 3, seed, o.noise);
  } else if (o.kind == "piecewise") {
    d = synthetic::piecewise(o.rows, seed, o.noise);
  } else {
    throw ConfigError("unknown --kind '" + o.kind + "' (blobs, linear, piecewise)");
  }
  if (!o.labels) {
    d.labels.reset();
    d.label_name.clear();
  }
  const fs::path path = o.data_path.empty() ? out_dir(o) / (o.kind + ".csv") : fs::path(o.data_path);
  write_with(path, [&](std::ostream& out) { write_csv(out, d); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical clustering, per-leaf networks and multi-criteria ranking"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config_path, "flat key = value config file");
    c->add_option("--data", o.data_path, "CSV data file");
    c->add_option("--bundle", o.bundle_path, "model bundle directory");
    c->add_option("--seed", o.seed, "master seed");
    c->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    c->add_option("--format", o.format, "csv|json|md (default: all)");
    c->add_option("--workers", o.workers, "worker ladder, e.g. 1,2,4,8");
    c->add_option("--records", o.records, "synthetic stream length");
    c->add_option("--set", o.sets, "override a config key: key=value");
  };
  auto* train = app.add_subcommand("train", "train a model bundle");
  auto* rank_cmd = app.add_subcommand("rank", "rank alternatives with a bundle");
  auto* bench_cmd = app.add_subcommand("bench", "compare against baseline models");
  auto* stream = app.add_subcommand("stream", "speed-layer latency experiment");
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  for (auto* c : {train, rank_cmd, bench_cmd, stream}) common(c);
  stream->add_option("--replay", o.replay_path, "stream CSV: sequence_id,timestamp,features...");
  gen->add_option("--kind", o.kind, "blobs|linear|piecewise")->capture_default_str();
  gen->add_option("--rows", o.rows, "row count")->capture_default_str();
  gen->add_option("--noise", o.noise, "target noise")->capture_default_str();
  gen->add_option("--seed", o.seed, "seed");
  gen->add_flag("--labels", o.labels, "add the class column (use with --set io.label=class)");
  gen->add_option("--data", o.data_path, "output CSV path");
  gen->add_option("--out", o.out_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) return cmd_train(o);
    if (*rank_cmd) return cmd_rank(o);
    if (*bench_cmd) return cmd_bench(o);
    if (*stream) return cmd_stream(o);
    if (*gen) return cmd_generate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: computation: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
