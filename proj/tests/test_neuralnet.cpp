#include <gtest/gtest.h>

#include "mcdl/neuralnet.hpp"
#include "oracles.hpp"

using namespace mcdl;

namespace {

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

/// Largest relative error between analytic and central-difference gradients.
double gradient_check(const Mlp& model, const Matrix& x, const Matrix& y) {
  const Mlp g = gradient(model, x, y);
  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](auto getter) {
    Mlp plus = model, minus = model;
    getter(plus) += h;
    getter(minus) -= h;
    const double fd = (oracle::loss(to_oracle(plus), x, y) - oracle::loss(to_oracle(minus), x, y)) / (2 * h);
    const double an = getter(const_cast<Mlp&>(g));
    const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
    worst = std::max(worst, rel);
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (std::size_t k = 0; k < model.layers[l].weights.size(); ++k) {
      check([&](Mlp& m) -> double& { return m.layers[l].weights[k]; });
    }
    for (std::size_t k = 0; k < model.layers[l].bias.size(); ++k) {
      check([&](Mlp& m) -> double& { return m.layers[l].bias[k]; });
    }
  }
  return worst;
}

Matrix xor_inputs() { return {{0, 0}, {0, 1}, {1, 0}, {1, 1}}; }
Matrix xor_targets() { return {{0}, {1}, {1}, {0}}; }

}  // namespace

TEST(Forward, ZeroNetworkHiddenHalf) {
  Mlp m = Mlp::create({3, 3, 1}, 1).zeros_like();
  const auto trace = forward_trace(m, Vector{1.0, -2.0, 5.0});
  for (double a : trace[1]) EXPECT_EQ(a, 0.5);
  EXPECT_EQ(trace.back()[0], 0.0);
}

TEST(Forward, AffineOnly) {
  Mlp m;
  m.layers.push_back(Layer{1, 1, {2.0}, {1.0}});
  EXPECT_EQ(forward(m, Vector{3.0}), (Vector{7.0}));
}

TEST(Forward, MatchesStraightLineOracle) {
  Rng rng(1);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Mlp m = Mlp::create({4, 6, 3, 2}, seed);
    Vector x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const auto got = forward(m, x);
    const auto want = oracle::forward(to_oracle(m), x);
    for (std::size_t o = 0; o < 2; ++o) EXPECT_NEAR(got[o], want[o], 1e-12);
  }
  EXPECT_THROW(forward(Mlp::create({2, 1}, 0), Vector{1.0}), InputError);
}

TEST(Init, UniformBounds) {
  const Mlp m = Mlp::create({9, 4, 1}, 3);
  for (const auto& l : m.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (double w : l.weights) EXPECT_LE(std::abs(w), bound);
    for (double b : l.bias) EXPECT_LE(std::abs(b), bound);
  }
  EXPECT_EQ(m.parameter_count(), 9u * 4 + 4 + 4 + 1);
  EXPECT_TRUE(m == Mlp::create({9, 4, 1}, 3));
  EXPECT_FALSE(m == Mlp::create({9, 4, 1}, 4));
}

TEST(Gradient, ZeroAtPerfectFit) {
  const Mlp m = Mlp::create({2, 3, 1}, 8);
  Matrix x{{0.1, 0.2}, {-1, 2}};
  Matrix y;
  for (const auto& r : x) y.push_back(forward(m, r));
  const Mlp g = gradient(m, x, y);
  for (const auto& l : g.layers) {
    for (double v : l.weights) EXPECT_EQ(v, 0.0);
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
  }
}

TEST(Gradient, FiniteDifferenceOnRandomSmallNetworks) {
  Rng rng(42);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 60; ++seed) {
    const std::size_t in = 1 + rng.index(3);
    const std::size_t hidden = 1 + rng.index(3);
    const std::size_t out = 1 + rng.index(2);
    const Mlp m = Mlp::create({in, hidden, out}, seed);
    if (m.parameter_count() > 20) continue;
    Matrix x, y;
    const std::size_t batch = 1 + rng.index(5);
    for (std::size_t b = 0; b < batch; ++b) {
      Vector xi(in), yi(out);
      for (auto& v : xi) v = rng.normal();
      for (auto& v : yi) v = rng.normal();
      x.push_back(xi);
      y.push_back(yi);
    }
    EXPECT_LE(gradient_check(m, x, y), 1e-4) << "seed " << seed;
    ++checked;
  }
}

TEST(Gradient, MeanReductionInvariantToDuplication) {
  const Mlp m = Mlp::create({2, 4, 1}, 5);
  Matrix x{{0.5, -1}, {2, 0.3}, {-0.7, 0.1}};
  Matrix y{{1}, {-1}, {0.5}};
  Matrix x2 = x, y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  const Mlp a = gradient(m, x, y), b = gradient(m, x2, y2);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t k = 0; k < a.layers[l].weights.size(); ++k) {
      EXPECT_NEAR(a.layers[l].weights[k], b.layers[l].weights[k], 1e-15);
    }
  }
}

TEST(Train, LinearRecoversSlope) {
  Matrix x, y;
  for (int i = -10; i <= 10; ++i) {
    x.push_back({i / 10.0});
    y.push_back({2.0 * i / 10.0});
  }
  // Closed-form least squares for the same data.
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs.push_back(x[i]);
    ys.push_back(y[i][0]);
  }
  const auto ls = oracle::ols(xs, ys);
  auto [m, rep] = train(Mlp::create({1, 1}, 0), x, y, {0.5, 2000, 8, 1});
  EXPECT_NEAR(m.layers[0].weights[0], ls[0], 1e-3);
  EXPECT_NEAR(m.layers[0].weights[0], 2.0, 1e-3);
  EXPECT_EQ(rep.epochs_run, 2000u);
}

TEST(Train, ZeroStepLeavesModel) {
  const Mlp m0 = Mlp::create({2, 3, 1}, 2);
  auto [m, rep] = train(m0, xor_inputs(), xor_targets(), {0.0, 1, 2, 0});
  EXPECT_TRUE(m == m0);
  EXPECT_EQ(rep.epoch_losses.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.final_loss, mse(m0, xor_inputs(), xor_targets()));
}

TEST(Train, XorOnMostSeeds) {
  int solved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto [m, rep] = train(Mlp::create({2, 4, 1}, seed), xor_inputs(), xor_targets(), {0.5, 5000, 4, seed});
    if (rep.final_loss < 0.05) ++solved;
  }
  EXPECT_GE(solved, 8);
}

TEST(Train, DeterministicAndDivergenceGuard) {
  const auto a = train(Mlp::create({2, 4, 1}, 1), xor_inputs(), xor_targets(), {0.5, 50, 2, 3});
  const auto b = train(Mlp::create({2, 4, 1}, 1), xor_inputs(), xor_targets(), {0.5, 50, 2, 3});
  EXPECT_TRUE(a.first == b.first);
  EXPECT_EQ(a.second.epoch_losses, b.second.epoch_losses);
  Matrix x{{100}, {-100}}, y{{1000}, {-1000}};
  EXPECT_THROW(train(Mlp::create({1, 1}, 0), x, y, {10.0, 50, 2, 0}), ComputationError);
  EXPECT_THROW(train(Mlp::create({1, 1}, 0), x, y, {-1.0, 5, 2, 0}), ConfigError);
}

TEST(DecisionValue, Formula) {
  EXPECT_EQ(decision_value(5, 5, 2), 0.0);
  EXPECT_EQ(decision_value(7, 5, 2), 1.0);
  EXPECT_THROW(decision_value(7, 5, 0), InputError);
}

TEST(Json, RoundTrip) {
  const Mlp m = Mlp::create({3, 5, 2}, 12);
  EXPECT_TRUE(nlohmann::json(m).get<Mlp>() == m);
}
