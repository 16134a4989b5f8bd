#include <gtest/gtest.h>

#include <sstream>

#include "mcdl/mcdm.hpp"
#include "oracles.hpp"

using namespace mcdl;

namespace {

struct RandomGraph {
  AgentGraph graph;
  std::vector<oracle::PlainAgent> plain;
};

/// Random directed neighborhoods over ids drawn from a sparse range.
RandomGraph random_graph(Rng& rng, std::size_t max_agents, double b_lo = -5, double b_hi = 10) {
  const std::size_t n = 1 + rng.index(max_agents);
  std::vector<int> ids;
  while (ids.size() < n) {
    const int id = static_cast<int>(rng.index(50));
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  std::vector<Agent> agents;
  RandomGraph out;
  for (int id : ids) {
    Agent a;
    a.id = id;
    a.b = rng.uniform(b_lo, b_hi);
    for (int j : ids) {
      if (j != id && rng.uniform() < 0.5) a.neighbors.push_back(j);
    }
    out.plain.push_back({a.id, a.b, {a.neighbors.begin(), a.neighbors.end()}});
    agents.push_back(std::move(a));
  }
  const double K = rng.uniform(0.5, 6.0);
  out.graph = AgentGraph(std::move(agents), K);
  return out;
}

}  // namespace

TEST(Mu, HandValuesAndLaws) {
  EXPECT_EQ(mu(2, 4, 2), 3.0);
  EXPECT_EQ(mu(0, 0, 7), 0.0);
  EXPECT_THROW(mu(1, 1, 0), InputError);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double x = rng.normal(), y = rng.normal(), K = rng.uniform(0.1, 5);
    EXPECT_EQ(mu(x, y, K), mu(y, x, K));
  }
}

TEST(MutualMu, HandValuesAndLinearity) {
  EXPECT_EQ(mutual_mu(2, 4, 2, 0), 3.0);
  EXPECT_EQ(mutual_mu(2, 4, 2, 1), 6.0);
  EXPECT_EQ(mutual_mu(2, 4, 2, 9), 10.0 * mutual_mu(2, 4, 2, 0));
  EXPECT_THROW(mutual_mu(2, 4, 2, -1), InputError);
}

TEST(Benefit, TwoAgentHandExample) {
  const AgentGraph g({{1, 2.0, {}, {2}}, {2, 4.0, {}, {}}}, 2.0);
  EXPECT_EQ(mu(2.0, 4.0, g.K()), 3.0);
  EXPECT_EQ(neighbor_benefit(1, g, Weighting::plain), 12.0);
  EXPECT_EQ(overall_benefit(1, g, Weighting::plain), 14.0);
  EXPECT_EQ(neighbor_benefit(2, g, Weighting::plain), 0.0);
}

TEST(Benefit, EmptyAndZeroCases) {
  const AgentGraph iso({{0, 7.0, {}, {}}}, 3.0);
  EXPECT_EQ(overall_benefit(0, iso, Weighting::plain), 7.0);
  EXPECT_EQ(overall_benefit(0, iso, Weighting::mutual), 7.0);
  Rng rng(4);
  auto rg = random_graph(rng, 7);
  const auto zero = rg.graph.scaled(0.0);
  for (const auto& a : zero.agents()) {
    EXPECT_EQ(neighbor_benefit(a.id, zero, Weighting::plain), 0.0);
    EXPECT_EQ(neighbor_benefit(a.id, zero, Weighting::mutual), 0.0);
  }
}

TEST(Benefit, FiveAgentOracle) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    auto rg = random_graph(rng, 5);
    for (bool mutual : {false, true}) {
      const auto want = oracle::scores(rg.plain, rg.graph.K(), mutual);
      for (const auto& [id, s] : want) {
        EXPECT_NEAR(overall_benefit(id, rg.graph, mutual ? Weighting::mutual : Weighting::plain), s,
                    1e-12 * std::max(1.0, std::abs(s)));
      }
    }
  }
}

TEST(Rank, SortLawAndTies) {
  // B = b for isolated agents: a=3, b=1, c=2.
  const AgentGraph g({{10, 3.0, {}, {}}, {11, 1.0, {}, {}}, {12, 2.0, {}, {}}}, 1.0);
  EXPECT_EQ(rank(g, Weighting::plain).order(), (std::vector<int>{10, 12, 11}));
  const AgentGraph tie({{5, 1.0, {}, {}}, {3, 1.0, {}, {}}}, 1.0);
  EXPECT_EQ(rank(tie, Weighting::plain).order(), (std::vector<int>{3, 5}));
  EXPECT_THROW(rank(AgentGraph({}, 1.0), Weighting::plain), InputError);
}

TEST(Rank, SixAgentOracleOrder) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    auto rg = random_graph(rng, 6);
    for (bool mutual : {false, true}) {
      const auto want = oracle::scores(rg.plain, rg.graph.K(), mutual);
      EXPECT_EQ(rank(rg.graph, mutual ? Weighting::mutual : Weighting::plain).order(), oracle::order(want));
    }
  }
}

// Scaling every b by c scales the own term by c and the neighbor sum by c^2.
TEST(Rank, ScalingLaw) {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    auto rg = random_graph(rng, 12, 0.0, 10.0);
    const double c = rng.uniform(0.01, 100.0);
    const auto scaled = rg.graph.scaled(c);
    for (auto w : {Weighting::plain, Weighting::mutual}) {
      for (const auto& a : rg.graph.agents()) {
        const double want = c * a.b + c * c * neighbor_benefit(a.id, rg.graph, w);
        EXPECT_NEAR(overall_benefit(a.id, scaled, w), want, 1e-9 * std::max(1.0, std::abs(want)));
      }
    }
  }
}

TEST(Rank, ScalingKeepsOrderWithoutNeighbors) {
  Rng rng(11);
  std::vector<Agent> agents;
  for (int i = 0; i < 20; ++i) agents.push_back({i, rng.uniform(0, 10), {}, {}});
  const AgentGraph g(agents, 3.0);
  for (double c : {0.5, 2.0, 1e3}) EXPECT_EQ(rank(g, Weighting::plain).order(), rank(g.scaled(c), Weighting::plain).order());
}

TEST(Rank, ScalingCanReorderWithNeighbors) {
  // c=1: B = {10, 1 + 6*5 = 31, 5}. c=0.1: B = {1, 0.1 + 0.6*0.5 = 0.4, 0.5}.
  const AgentGraph g({{0, 10.0, {}, {}}, {1, 1.0, {}, {2}}, {2, 5.0, {}, {}}}, 1.0);
  EXPECT_EQ(rank(g, Weighting::plain).order(), (std::vector<int>{1, 0, 2}));
  EXPECT_EQ(rank(g.scaled(0.1), Weighting::plain).order(), (std::vector<int>{0, 2, 1}));
}

TEST(Graph, Validation) {
  EXPECT_THROW(AgentGraph({{1, 1, {}, {}}, {1, 2, {}, {}}}, 1.0), InputError);
  EXPECT_THROW(AgentGraph({{1, 1, {}, {1}}}, 1.0), InputError);
  EXPECT_THROW(AgentGraph({{1, 1, {}, {9}}}, 1.0), InputError);
  EXPECT_THROW(AgentGraph({{1, 1, {}, {}}}, 0.0), InputError);
  const AgentGraph g({{1, 1, {}, {}}}, 1.0);
  EXPECT_THROW(g.agent(2), InputError);
}

TEST(Build, CollinearNeighborhoods) {
  const auto g = build_agent_graph({{0.0}, {1.0}, {10.0}}, 1);
  EXPECT_EQ(g.agent(1).neighbors, (std::vector<int>{0, 2}));
  EXPECT_EQ(g.agent(0).neighbors, (std::vector<int>{1}));
  EXPECT_EQ(g.agent(2).neighbors, (std::vector<int>{1}));
  EXPECT_EQ(g.K(), 1.0);
}

TEST(Build, IdenticalCriteriaRankById) {
  const auto g = build_agent_graph(Matrix(6, Vector{2.0, 4.0}), 2);
  for (const auto& a : g.agents()) EXPECT_EQ(a.b, 3.0);
  EXPECT_EQ(rank(g, Weighting::plain).order(), (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(Build, RangeChecks) {
  EXPECT_THROW(build_agent_graph({{1}, {2}, {3}}, 3), InputError);
  EXPECT_THROW(build_agent_graph({{1}, {2}, {3}}, 0), InputError);
  EXPECT_THROW(build_agent_graph({{1}}, 1), InputError);
  EXPECT_EQ(build_agent_graph({{1}, {2}, {3}}, 2, 5.0).K(), 5.0);
}

TEST(Incremental, MatchesFullRecomputeAfterEveryInsert) {
  Rng rng(12);
  for (auto w : {Weighting::plain, Weighting::mutual}) {
    for (int run = 0; run < 5; ++run) {
      Matrix crit;
      for (int i = 0; i < 20; ++i) crit.push_back({rng.normal(), rng.uniform(0, 3)});
      const std::size_t k = 1 + rng.index(4);
      IncrementalRanker ranker(build_agent_graph(crit, k), w, k);
      while (ranker.size() < 100) {
        const auto res = ranker.insert({rng.normal(), rng.uniform(0, 3)});
        const auto full = rank(ranker.graph(), w);
        const auto inc = ranker.ranking();
        ASSERT_EQ(inc.order(), full.order());
        for (std::size_t i = 0; i < full.size(); ++i) {
          EXPECT_NEAR(inc.entries[i].score, full.entries[i].score, 1e-9 * std::max(1.0, std::abs(full.entries[i].score)));
        }
        EXPECT_EQ(res.neighbors.size(), k);
        EXPECT_EQ(ranker.score(res.id), res.score);
      }
    }
  }
}

TEST(Output, CsvAndJson) {
  const AgentGraph g({{1, 2.0, {}, {2}}, {2, 4.0, {}, {}}}, 2.0);
  const auto r = rank(g, Weighting::plain);
  std::ostringstream out;
  write_ranking_csv(out, r);
  EXPECT_EQ(out.str(), "rank,agent_id,score\n1,1,14\n2,2,4\n");
  EXPECT_EQ(ranking_json(r)["ranking"][0]["score"].get<double>(), 14.0);
  EXPECT_EQ(parse_weighting("mutual"), Weighting::mutual);
  EXPECT_THROW(parse_weighting("other"), ConfigError);
}
