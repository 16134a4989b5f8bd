#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mcdl/baselines.hpp"
#include "mcdl/cluster.hpp"
#include "mcdl/common.hpp"
#include "mcdl/mcdm.hpp"
#include "mcdl/neuralnet.hpp"

namespace mcdl {

struct NetworkConfig {
  std::vector<std::size_t> hidden{16, 8};
  double lr = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
};

struct McdmConfig {
  std::size_t neighborhood_k = 10;
  /// 0 means "use neighborhood_k".
  double K = 0.0;
  Weighting weighting = Weighting::plain;

  double effective_K() const { return K > 0.0 ? K : static_cast<double>(neighborhood_k); }
};

struct StreamConfig {
  std::size_t window = 1024;
  std::size_t warmup = 64;
  std::vector<std::size_t> workers{1, 2, 4, 8};
  std::size_t records = 10000;
  std::size_t repetitions = 5;
};

struct IoConfig {
  std::string target = "target";
  std::string label;
  std::vector<std::string> features;
  std::string format = "all";
};

/// Every tunable of the pipeline. Stands in for the model parameters the
/// method leaves unnamed.
struct PipelineConfig {
  std::uint64_t seed = 42;
  TreeConfig cluster;
  NetworkConfig network;
  McdmConfig mcdm;
  StreamConfig stream;
  BenchConfig bench;
  IoConfig io;

  void validate() const {
    cluster.validate();
    for (auto w : network.hidden) {
      if (w == 0) throw ConfigError("network.hidden widths must be positive");
    }
    if (!(network.lr >= 0.0)) throw ConfigError("network.lr must be non-negative");
    if (network.epochs < 1) throw ConfigError("network.epochs must be at least 1");
    if (network.batch_size < 1) throw ConfigError("network.batch_size must be at least 1");
    if (mcdm.neighborhood_k < 1) throw ConfigError("mcdm.neighborhood_k must be at least 1");
    if (mcdm.K < 0.0) throw ConfigError("mcdm.K must be non-negative (0 = neighborhood_k)");
    if (stream.window < 1) throw ConfigError("stream.window must be at least 1");
    if (stream.warmup < 1 || stream.warmup > stream.window) {
      throw ConfigError("stream.warmup must lie in [1, stream.window]");
    }
    if (stream.workers.empty()) throw ConfigError("stream.workers must list at least one worker count");
    for (auto w : stream.workers) {
      if (w < 1) throw ConfigError("stream.workers entries must be at least 1");
    }
    if (stream.repetitions < 1) throw ConfigError("stream.repetitions must be at least 1");
    if (!(bench.test_fraction > 0.0 && bench.test_fraction < 1.0)) {
      throw ConfigError("bench.test_fraction must lie in (0, 1)");
    }
    if (bench.knn_k < 1) throw ConfigError("bench.knn_k must be at least 1");
    if (!(bench.ridge_lambda >= 0.0)) throw ConfigError("bench.ridge_lambda must be non-negative");
    if (bench.tree_max_depth < 1) throw ConfigError("bench.tree_max_depth must be at least 1");
    if (io.target.empty()) throw ConfigError("io.target must name a column");
    if (io.format != "all" && io.format != "csv" && io.format != "json" && io.format != "md") {
      throw ConfigError("io.format must be one of all, csv, json, md");
    }
  }

  CsvSchema schema() const { return CsvSchema{io.target, io.label, io.features}; }
  TrainHyper leaf_hyper(std::size_t leaf) const {
    return {network.lr, network.epochs, network.batch_size, mix_seed(seed, 2000 + leaf)};
  }
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string join_strings(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto t = trim(v);
  auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  return static_cast<std::uint64_t>(to_size(key, v));
}

inline double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(v, out) || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + v + "'");
  }
  return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(to_size(key, item));
  return out;
}

struct ConfigField {
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = PipelineConfig;
  using S = const std::string&;
  static const std::vector<ConfigField> fields{
      {"seed", [](const C& c) { return std::to_string(c.seed); },
       [](C& c, S v) { c.seed = to_u64("seed", v); }},
      {"cluster.branching_k", [](const C& c) { return std::to_string(c.cluster.branching_k); },
       [](C& c, S v) { c.cluster.branching_k = to_size("cluster.branching_k", v); }},
      {"cluster.max_depth", [](const C& c) { return std::to_string(c.cluster.max_depth); },
       [](C& c, S v) { c.cluster.max_depth = to_size("cluster.max_depth", v); }},
      {"cluster.min_leaf_size", [](const C& c) { return std::to_string(c.cluster.min_leaf_size); },
       [](C& c, S v) { c.cluster.min_leaf_size = to_size("cluster.min_leaf_size", v); }},
      {"cluster.quality_threshold", [](const C& c) { return format_double(c.cluster.quality_threshold); },
       [](C& c, S v) { c.cluster.quality_threshold = to_real("cluster.quality_threshold", v); }},
      {"cluster.max_iter", [](const C& c) { return std::to_string(c.cluster.max_iter); },
       [](C& c, S v) { c.cluster.max_iter = to_size("cluster.max_iter", v); }},
      {"cluster.tol", [](const C& c) { return format_double(c.cluster.tol); },
       [](C& c, S v) { c.cluster.tol = to_real("cluster.tol", v); }},
      {"network.hidden", [](const C& c) { return join_sizes(c.network.hidden); },
       [](C& c, S v) { c.network.hidden = to_sizes("network.hidden", v); }},
      {"network.lr", [](const C& c) { return format_double(c.network.lr); },
       [](C& c, S v) { c.network.lr = to_real("network.lr", v); }},
      {"network.epochs", [](const C& c) { return std::to_string(c.network.epochs); },
       [](C& c, S v) { c.network.epochs = to_size("network.epochs", v); }},
      {"network.batch_size", [](const C& c) { return std::to_string(c.network.batch_size); },
       [](C& c, S v) { c.network.batch_size = to_size("network.batch_size", v); }},
      {"mcdm.neighborhood_k", [](const C& c) { return std::to_string(c.mcdm.neighborhood_k); },
       [](C& c, S v) { c.mcdm.neighborhood_k = to_size("mcdm.neighborhood_k", v); }},
      {"mcdm.K", [](const C& c) { return format_double(c.mcdm.K); },
       [](C& c, S v) { c.mcdm.K = to_real("mcdm.K", v); }},
      {"mcdm.weighting", [](const C& c) { return std::string(to_string(c.mcdm.weighting)); },
       [](C& c, S v) { c.mcdm.weighting = parse_weighting(trim(v)); }},
      {"stream.window", [](const C& c) { return std::to_string(c.stream.window); },
       [](C& c, S v) { c.stream.window = to_size("stream.window", v); }},
      {"stream.warmup", [](const C& c) { return std::to_string(c.stream.warmup); },
       [](C& c, S v) { c.stream.warmup = to_size("stream.warmup", v); }},
      {"stream.workers", [](const C& c) { return join_sizes(c.stream.workers); },
       [](C& c, S v) { c.stream.workers = to_sizes("stream.workers", v); }},
      {"stream.records", [](const C& c) { return std::to_string(c.stream.records); },
       [](C& c, S v) { c.stream.records = to_size("stream.records", v); }},
      {"stream.repetitions", [](const C& c) { return std::to_string(c.stream.repetitions); },
       [](C& c, S v) { c.stream.repetitions = to_size("stream.repetitions", v); }},
      {"bench.test_fraction", [](const C& c) { return format_double(c.bench.test_fraction); },
       [](C& c, S v) { c.bench.test_fraction = to_real("bench.test_fraction", v); }},
      {"bench.knn_k", [](const C& c) { return std::to_string(c.bench.knn_k); },
       [](C& c, S v) { c.bench.knn_k = to_size("bench.knn_k", v); }},
      {"bench.knn_metric", [](const C& c) { return to_string(c.bench.knn_metric); },
       [](C& c, S v) { c.bench.knn_metric = parse_metric(trim(v)); }},
      {"bench.ridge_lambda", [](const C& c) { return format_double(c.bench.ridge_lambda); },
       [](C& c, S v) { c.bench.ridge_lambda = to_real("bench.ridge_lambda", v); }},
      {"bench.tree_max_depth", [](const C& c) { return std::to_string(c.bench.tree_max_depth); },
       [](C& c, S v) { c.bench.tree_max_depth = to_size("bench.tree_max_depth", v); }},
      {"bench.tree_min_leaf", [](const C& c) { return std::to_string(c.bench.tree_min_leaf); },
       [](C& c, S v) { c.bench.tree_min_leaf = to_size("bench.tree_min_leaf", v); }},
      {"bench.bernoulli_threshold", [](const C& c) { return format_double(c.bench.bernoulli_threshold); },
       [](C& c, S v) { c.bench.bernoulli_threshold = to_real("bench.bernoulli_threshold", v); }},
      {"bench.svm_lr", [](const C& c) { return format_double(c.bench.svm.lr); },
       [](C& c, S v) { c.bench.svm.lr = to_real("bench.svm_lr", v); }},
      {"bench.svm_epochs", [](const C& c) { return std::to_string(c.bench.svm.epochs); },
       [](C& c, S v) { c.bench.svm.epochs = to_size("bench.svm_epochs", v); }},
      {"bench.svm_C", [](const C& c) { return format_double(c.bench.svm.C); },
       [](C& c, S v) { c.bench.svm.C = to_real("bench.svm_C", v); }},
      {"io.target", [](const C& c) { return c.io.target; }, [](C& c, S v) { c.io.target = trim(v); }},
      {"io.label", [](const C& c) { return c.io.label; }, [](C& c, S v) { c.io.label = trim(v); }},
      {"io.features", [](const C& c) { return join_strings(c.io.features); },
       [](C& c, S v) { c.io.features = split_list(v); }},
      {"io.format", [](const C& c) { return c.io.format; }, [](C& c, S v) { c.io.format = trim(v); }},
  };
  return fields;
}

}  // namespace detail

/// Sets one flat key, e.g. `cluster.max_depth`.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string get_config_value(const PipelineConfig& cfg, const std::string& key) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) return f.get(cfg);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
inline void apply_config_text(PipelineConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (detail::blank(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = detail::trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  apply_config_text(cfg, in, "<config>");
  return cfg;
}

inline void load_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  apply_config_text(cfg, in, path);
}

inline std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

inline bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace mcdl
