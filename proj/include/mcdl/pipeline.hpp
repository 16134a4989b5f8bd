#pragma once

#include <chrono>
#include <future>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcdl/cluster.hpp"
#include "mcdl/config.hpp"
#include "mcdl/ingest.hpp"
#include "mcdl/mcdm.hpp"
#include "mcdl/neuralnet.hpp"

namespace mcdl {

/// Trained end-to-end model: feature and target normalization, the cluster
/// tree and one network per leaf. Leaf networks map z-scored features to the
/// z-scored target.
struct TrainedPipeline {
  PipelineConfig config;
  std::vector<std::string> feature_names;
  std::string target_name;
  NormParams features;
  NormParams target;
  ClusterTree tree;
  std::vector<Mlp> leaf_models;
  std::vector<TrainReport> leaf_reports;

  std::size_t dim() const { return features.dim(); }

  /// Target-space prediction for a row already normalized by the caller.
  double predict_normalized(std::span<const double> z) const {
    const std::size_t leaf = assign_leaf(tree, z);
    return target.inverse(0, forward(leaf_models[leaf], z)[0]);
  }

  /// Normalizes with `feature_norm`, routes, runs the leaf network and
  /// returns the target-space prediction.
  double predict(std::span<const double> raw, const NormParams& feature_norm) const {
    return predict_normalized(feature_norm.apply(raw));
  }
  double predict(std::span<const double> raw) const { return predict(raw, features); }

  double decision_value_of(double prediction) const { return decision_value(prediction, target, 0); }

  /// Offline scoring path: the decision value of one raw row.
  double decision_value_for(std::span<const double> raw, const NormParams& feature_norm) const {
    return decision_value_of(predict(raw, feature_norm));
  }
  double decision_value_for(std::span<const double> raw) const { return decision_value_for(raw, features); }
};

struct TrainSummary {
  std::size_t rows = 0;
  std::size_t leaves = 0;
  std::size_t depth = 0;
  std::vector<std::size_t> leaf_sizes;
  Vector leaf_final_losses;
  double normalize_ms = 0.0;
  double cluster_ms = 0.0;
  double train_ms = 0.0;
};

/// ingest (validated) -> normalize -> hierarchy -> per-leaf training.
inline TrainedPipeline train_pipeline(const Dataset& data, const PipelineConfig& cfg, TrainSummary* summary = nullptr,
                                      bool parallel = false) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  cfg.validate();
  data.validate();

  auto t0 = clock::now();
  TrainedPipeline p;
  p.config = cfg;
  p.feature_names = data.feature_names;
  p.target_name = data.target_name;
  auto [normalized, params] = zscore_normalize(data);
  p.features = std::move(params);
  p.target = NormParams::fit(data.targets);
  if (p.target.constant[0]) throw ComputationError("training target is constant; decision values are undefined");
  Vector z_targets(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) z_targets[i] = p.target.forward(0, data.targets[i]);
  const double normalize_ms = ms_since(t0);

  t0 = clock::now();
  TreeConfig tree_cfg = cfg.cluster;
  tree_cfg.seed = mix_seed(cfg.seed, 1000);
  p.tree = build_hierarchy(normalized.rows, tree_cfg, parallel);
  const double cluster_ms = ms_since(t0);

  t0 = clock::now();
  std::vector<std::size_t> widths{data.dim()};
  widths.insert(widths.end(), cfg.network.hidden.begin(), cfg.network.hidden.end());
  widths.push_back(1);
  auto fit_leaf = [&](std::size_t leaf) {
    const auto& members = p.tree.leaf(leaf).members;
    Matrix x;
    Vector y;
    for (std::size_t i : members) {
      x.push_back(normalized.rows[i]);
      y.push_back(z_targets[i]);
    }
    Mlp init = Mlp::create(widths, mix_seed(cfg.seed, 3000 + leaf));
    return train(std::move(init), x, y, cfg.leaf_hyper(leaf));
  };
  const std::size_t leaves = p.tree.leaf_count();
  p.leaf_models.resize(leaves);
  p.leaf_reports.resize(leaves);
  if (parallel) {
    std::vector<std::future<std::pair<Mlp, TrainReport>>> jobs;
    for (std::size_t l = 0; l < leaves; ++l) jobs.push_back(std::async(std::launch::async, fit_leaf, l));
    for (std::size_t l = 0; l < leaves; ++l) std::tie(p.leaf_models[l], p.leaf_reports[l]) = jobs[l].get();
  } else {
    for (std::size_t l = 0; l < leaves; ++l) std::tie(p.leaf_models[l], p.leaf_reports[l]) = fit_leaf(l);
  }

  if (summary) {
    summary->rows = data.size();
    summary->leaves = leaves;
    summary->depth = p.tree.depth;
    summary->leaf_sizes.clear();
    summary->leaf_final_losses.clear();
    for (std::size_t l = 0; l < leaves; ++l) {
      summary->leaf_sizes.push_back(p.tree.leaf(l).members.size());
      summary->leaf_final_losses.push_back(p.leaf_reports[l].final_loss);
    }
    summary->normalize_ms = normalize_ms;
    summary->cluster_ms = cluster_ms;
    summary->train_ms = ms_since(t0);
  }
  return p;
}

/// Decision value of every row; one criterion per alternative.
inline Matrix criteria_for(const TrainedPipeline& p, const Matrix& raw_rows) {
  Matrix criteria;
  criteria.reserve(raw_rows.size());
  for (const auto& r : raw_rows) {
    if (r.size() != p.dim()) {
      throw InputError("alternative has " + std::to_string(r.size()) + " features, model expects " +
                       std::to_string(p.dim()));
    }
    criteria.push_back({p.decision_value_for(r)});
  }
  return criteria;
}

inline AgentGraph agent_graph_for(const TrainedPipeline& p, const Matrix& raw_rows) {
  return build_agent_graph(criteria_for(p, raw_rows), p.config.mcdm.neighborhood_k, p.config.mcdm.effective_K());
}

/// Scores alternatives with the trained pipeline and ranks them.
inline Ranking rank_alternatives(const TrainedPipeline& p, const Matrix& raw_rows) {
  return rank(agent_graph_for(p, raw_rows), p.config.mcdm.weighting);
}

/// Proposed-model hook for `bench`: trains a pipeline on `train` and returns
/// target-space predictions for `test`.
inline ProposedRegressor proposed_regressor(const PipelineConfig& cfg) {
  return [cfg](const Dataset& train_set, const Dataset& test_set) {
    const auto p = train_pipeline(train_set, cfg);
    Vector pred;
    pred.reserve(test_set.size());
    for (const auto& r : test_set.rows) pred.push_back(p.predict(r));
    return pred;
  };
}

inline BenchReport run_bench(const Dataset& data, const PipelineConfig& cfg) {
  cfg.validate();
  BenchConfig bc = cfg.bench;
  bc.seed = mix_seed(cfg.seed, 4000);
  bc.svm.seed = mix_seed(cfg.seed, 4001);
  const auto [train_set, test_set] = split(data, bc.test_fraction, bc.seed);
  return bench(train_set, test_set, bc, proposed_regressor(cfg));
}

// ---------------------------------------------------------------------------
// JSON forms used by the model bundle.

inline nlohmann::json norm_json(const NormParams& n) {
  std::vector<int> constant;
  for (bool c : n.constant) constant.push_back(c ? 1 : 0);
  return {{"mean", n.mean}, {"delta", n.delta}, {"constant", constant}};
}

inline NormParams norm_from_json(const nlohmann::json& j) {
  NormParams n;
  j.at("mean").get_to(n.mean);
  j.at("delta").get_to(n.delta);
  for (int c : j.at("constant").get<std::vector<int>>()) n.constant.push_back(c != 0);
  if (n.delta.size() != n.mean.size() || n.constant.size() != n.mean.size()) {
    throw InputError("normalization parameters have inconsistent lengths");
  }
  return n;
}

inline nlohmann::json report_json(const TrainReport& r) {
  return {{"epochs_run", r.epochs_run}, {"final_loss", r.final_loss}, {"epoch_losses", r.epoch_losses}};
}

inline TrainReport report_from_json(const nlohmann::json& j) {
  TrainReport r;
  j.at("epochs_run").get_to(r.epochs_run);
  j.at("final_loss").get_to(r.final_loss);
  j.at("epoch_losses").get_to(r.epoch_losses);
  return r;
}

}  // namespace mcdl
