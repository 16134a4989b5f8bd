#include <gtest/gtest.h>

#include <filesystem>

#include "mcdl/bundle.hpp"
#include "mcdl/pipeline.hpp"
#include "mcdl/synthetic.hpp"

using namespace mcdl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(MCDL_TEST_TMP) / "pipeline" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset blob_data() { return synthetic::blobs(synthetic::four_blobs(), 100, 42); }

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.network.epochs = 60;
  return cfg;
}

}  // namespace

TEST(Config, RoundTripDefaultsAndEdited) {
  PipelineConfig cfg;
  EXPECT_TRUE(parse_config(serialize_config(cfg)) == cfg);
  set_config_value(cfg, "network.hidden", "32,4,2");
  set_config_value(cfg, "mcdm.weighting", "mutual");
  set_config_value(cfg, "mcdm.K", "2.5");
  set_config_value(cfg, "cluster.quality_threshold", "0.1");
  set_config_value(cfg, "io.features", "a,b");
  set_config_value(cfg, "bench.knn_metric", "minkowski:3");
  set_config_value(cfg, "seed", "18446744073709551615");
  const auto text = serialize_config(cfg);
  const auto back = parse_config(text);
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.network.hidden, (std::vector<std::size_t>{32, 4, 2}));
  EXPECT_EQ(back.seed, 18446744073709551615ull);
}

TEST(Config, Errors) {
  PipelineConfig cfg;
  EXPECT_THROW(set_config_value(cfg, "nope", "1"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "cluster.max_depth", "-1"), ConfigError);
  EXPECT_THROW(set_config_value(cfg, "network.lr", "fast"), ConfigError);
  EXPECT_THROW(parse_config("seed 4\n"), ConfigError);
  cfg.mcdm.neighborhood_k = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto c = parse_config("# comment\n\nseed = 7  # trailing\n");
  EXPECT_EQ(c.seed, 7u);
}

TEST(Pipeline, BlobsTrainFourAccurateLeaves) {
  TrainSummary s;
  const auto p = train_pipeline(blob_data(), PipelineConfig{}, &s);
  EXPECT_EQ(s.leaves, 4u);
  for (double loss : s.leaf_final_losses) EXPECT_LT(loss, 0.1);
}

TEST(Pipeline, ParallelTrainingMatchesSequential) {
  const auto a = train_pipeline(blob_data(), fast_config(), nullptr, false);
  const auto b = train_pipeline(blob_data(), fast_config(), nullptr, true);
  EXPECT_EQ(bundle_files(a), bundle_files(b));
}

TEST(Pipeline, ConstantTargetRejected) {
  auto d = blob_data();
  for (auto& t : d.targets) t = 1.0;
  EXPECT_THROW(train_pipeline(d, fast_config()), ComputationError);
}

TEST(Pipeline, DecisionValueMatchesFormula) {
  const auto d = blob_data();
  const auto p = train_pipeline(d, fast_config());
  for (std::size_t i = 0; i < d.size(); i += 37) {
    const double pred = p.predict(d.rows[i]);
    EXPECT_DOUBLE_EQ(p.decision_value_for(d.rows[i]), (pred - p.target.mean[0]) / p.target.delta[0]);
  }
}

TEST(Pipeline, RankingTopIsFromHighestBlob) {
  const auto d = blob_data();
  const auto p = train_pipeline(d, fast_config());
  const auto r = rank_alternatives(p, d.rows);
  EXPECT_GE(r.entries.front().id, 300);
  EXPECT_THROW(rank_alternatives(p, {{1.0, 2.0, 3.0}, {1, 2, 3}}), InputError);
}

TEST(Pipeline, IdenticalAlternativesRankInIdOrder) {
  const auto p = train_pipeline(blob_data(), fast_config());
  const auto r = rank_alternatives(p, Matrix(12, Vector{3.0, 4.0}));
  std::vector<int> ids(12);
  for (int i = 0; i < 12; ++i) ids[i] = i;
  EXPECT_EQ(r.order(), ids);
}

TEST(Bundle, ByteIdenticalAcrossRuns) {
  const auto a = scratch("a"), b = scratch("b");
  write_bundle(a, train_pipeline(blob_data(), fast_config()));
  write_bundle(b, train_pipeline(blob_data(), fast_config()));
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(read_text_file(e.path()), read_text_file(b / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 4u + 4u + 1u);
}

TEST(Bundle, ReadBackPredictsIdentically) {
  const auto dir = scratch("rt");
  const auto d = blob_data();
  const auto p = train_pipeline(d, fast_config());
  write_bundle(dir, p);
  const auto q = read_bundle(dir);
  EXPECT_EQ(bundle_files(q), bundle_files(p));
  for (std::size_t i = 0; i < d.size(); i += 11) EXPECT_EQ(q.predict(d.rows[i]), p.predict(d.rows[i]));
}

TEST(Bundle, TamperAndMissingDetected) {
  const auto dir = scratch("tamper");
  write_bundle(dir, train_pipeline(blob_data(), fast_config()));
  write_text_file(dir / "norm.json", read_text_file(dir / "norm.json") + " ");
  EXPECT_THROW(read_bundle(dir), IoError);
  EXPECT_THROW(read_bundle(dir / "missing"), IoError);
}

TEST(Bundle, DifferentSeedDiffers) {
  auto cfg = fast_config();
  const auto a = pipeline_digest(train_pipeline(blob_data(), cfg));
  cfg.seed = 43;
  EXPECT_NE(a, pipeline_digest(train_pipeline(blob_data(), cfg)));
}

TEST(Bench, ProposedRowIsComputed) {
  auto cfg = fast_config();
  cfg.io.label = "class";
  const auto r = run_bench(blob_data(), cfg);
  ASSERT_EQ(r.numerical.rows.size(), 5u);
  EXPECT_TRUE(r.numerical.rows[4].error.empty()) << r.numerical.rows[4].error;
  EXPECT_GT(*r.numerical.rows[4].first, 0.9);
  ASSERT_TRUE(r.categorical);
  EXPECT_TRUE(r.categorical->rows[4].error.empty()) << r.categorical->rows[4].error;
}
