#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcdl/common.hpp"
#include "mcdl/ingest.hpp"

namespace mcdl {

// ---------------------------------------------------------------------------
// k-nearest neighbors

struct DistanceMetric {
  enum class Kind { euclidean, manhattan, minkowski };
  Kind kind = Kind::euclidean;
  double p = 3.0;

  static DistanceMetric euclidean() { return {Kind::euclidean, 2.0}; }
  static DistanceMetric manhattan() { return {Kind::manhattan, 1.0}; }
  static DistanceMetric minkowski(double p = 3.0) { return {Kind::minkowski, p}; }
};

inline DistanceMetric parse_metric(const std::string& s) {
  if (s == "euclidean") return DistanceMetric::euclidean();
  if (s == "manhattan") return DistanceMetric::manhattan();
  if (s == "minkowski") return DistanceMetric::minkowski();
  const std::string prefix = "minkowski:";
  if (s.rfind(prefix, 0) == 0) {
    double p = 0.0;
    if (parse_double(s.substr(prefix.size()), p) && p >= 1.0) return DistanceMetric::minkowski(p);
  }
  throw ConfigError("unknown distance metric '" + s + "' (euclidean, manhattan, minkowski[:p])");
}

inline std::string to_string(const DistanceMetric& m) {
  switch (m.kind) {
    case DistanceMetric::Kind::euclidean: return "euclidean";
    case DistanceMetric::Kind::manhattan: return "manhattan";
    case DistanceMetric::Kind::minkowski: return "minkowski:" + format_double(m.p);
  }
  return "euclidean";
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

inline double manhattan_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

/// (sum |a_i - b_i|^p)^(1/p). p = 1 and p = 2 take the Manhattan and
/// Euclidean paths so the reductions hold bit-for-bit.
inline double minkowski_distance(std::span<const double> a, std::span<const double> b, double p) {
  if (!(p >= 1.0)) throw InputError("minkowski: p must be >= 1");
  if (p == 1.0) return manhattan_distance(a, b);
  if (p == 2.0) return euclidean_distance(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  return std::pow(s, 1.0 / p);
}

inline double distance(std::span<const double> a, std::span<const double> b, const DistanceMetric& m) {
  switch (m.kind) {
    case DistanceMetric::Kind::euclidean: return euclidean_distance(a, b);
    case DistanceMetric::Kind::manhattan: return manhattan_distance(a, b);
    case DistanceMetric::Kind::minkowski: return minkowski_distance(a, b, m.p);
  }
  return 0.0;
}

/// Mean target of the k nearest training rows; distance ties go to the lower row.
inline double knn_regress(const Matrix& rows, std::span<const double> targets, std::span<const double> query,
                          std::size_t k, const DistanceMetric& metric = DistanceMetric::euclidean()) {
  if (k < 1 || k > rows.size()) {
    throw InputError("knn: k = " + std::to_string(k) + " out of range [1, " + std::to_string(rows.size()) + "]");
  }
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != query.size()) throw InputError("knn: query dimension mismatch");
    d.emplace_back(distance(rows[i], query, metric), i);
  }
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  double s = 0.0;
  for (std::size_t t = 0; t < k; ++t) s += targets[d[t].second];
  return s / static_cast<double>(k);
}

inline double knn_regress(const Dataset& train, std::span<const double> query, std::size_t k,
                          const DistanceMetric& metric = DistanceMetric::euclidean()) {
  return knn_regress(train.rows, train.targets, query, k, metric);
}

// ---------------------------------------------------------------------------
// Linear least squares

struct LinearModel {
  Vector weights;
  double intercept = 0.0;

  double predict(std::span<const double> x) const {
    double s = intercept;
    for (std::size_t f = 0; f < weights.size(); ++f) s += weights[f] * x[f];
    return s;
  }
};

/// Minimizes ||y - Xw - c||^2 + lambda ||w||^2 (intercept unpenalized) through
/// the normal equations, factored with column-pivoting Householder QR.
inline LinearModel ridge_regress(const Matrix& rows, std::span<const double> targets, double lambda) {
  if (!(lambda >= 0.0)) throw InputError("ridge: lambda must be non-negative");
  if (rows.empty()) throw InputError("linear regression: empty training set");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd X(n, d + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index f = 0; f < d; ++f) X(i, f) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
    X(i, d) = 1.0;
    y(i) = targets[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd A = X.transpose() * X;
  for (Eigen::Index f = 0; f < d; ++f) A(f, f) += lambda;
  const Eigen::VectorXd rhs = X.transpose() * y;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < d + 1) {
    throw ComputationError("linear regression: singular normal equations (rank " + std::to_string(qr.rank()) +
                           " of " + std::to_string(d + 1) + ")");
  }
  const Eigen::VectorXd w = qr.solve(rhs);
  LinearModel m;
  m.weights.assign(w.data(), w.data() + d);
  m.intercept = w(d);
  return m;
}

inline LinearModel ols_regress(const Matrix& rows, std::span<const double> targets) {
  if (!rows.empty() && rows.front().size() + 1 > rows.size()) {
    throw ComputationError("ols: " + std::to_string(rows.front().size() + 1) + " coefficients but only " +
                           std::to_string(rows.size()) + " rows (rank deficient)");
  }
  return ridge_regress(rows, targets, 0.0);
}

// ---------------------------------------------------------------------------
// CART

struct TreeNode {
  std::ptrdiff_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;       // go left when x[feature] < threshold
  std::size_t left = 0;
  std::size_t right = 0;
  double value = 0.0;           // mean target, regression
  int label = 0;                // majority class, classification
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  std::size_t depth = 0;

  const TreeNode& leaf_for(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      i = x[static_cast<std::size_t>(nodes[i].feature)] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
    }
    return nodes[i];
  }
  double predict(std::span<const double> x) const { return leaf_for(x).value; }
  int classify(std::span<const double> x) const { return leaf_for(x).label; }
  std::size_t split_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature >= 0; }));
  }
};

namespace detail {

struct SplitChoice {
  std::ptrdiff_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Impurity interface: `Stats` accumulates rows; `cost(stats)` is the
/// weighted impurity of a node (SSE for regression, n * Gini for classes).
template <class Stats, class AddRow, class Cost>
SplitChoice best_split(const Matrix& rows, const std::vector<std::size_t>& idx, std::size_t min_leaf,
                       const Stats& empty, AddRow add, Cost cost, double parent_cost) {
  SplitChoice best;
  const std::size_t d = rows[idx[0]].size();
  std::vector<std::size_t> order = idx;
  for (std::size_t f = 0; f < d; ++f) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (rows[a][f] != rows[b][f]) return rows[a][f] < rows[b][f];
      return a < b;
    });
    std::vector<Stats> prefix(order.size() + 1, empty);
    std::vector<Stats> suffix(order.size() + 1, empty);
    for (std::size_t t = 0; t < order.size(); ++t) {
      prefix[t + 1] = prefix[t];
      add(prefix[t + 1], order[t], +1);
    }
    for (std::size_t t = order.size(); t-- > 0;) {
      suffix[t] = suffix[t + 1];
      add(suffix[t], order[t], +1);
    }
    for (std::size_t t = 1; t < order.size(); ++t) {
      const double lo = rows[order[t - 1]][f];
      const double hi = rows[order[t]][f];
      if (lo == hi) continue;
      if (t < min_leaf || order.size() - t < min_leaf) continue;
      const double gain = parent_cost - cost(prefix[t]) - cost(suffix[t]);
      if (gain > best.gain + 1e-12 * std::max(1.0, parent_cost)) {
        best.feature = static_cast<std::ptrdiff_t>(f);
        best.threshold = lo + (hi - lo) / 2.0;
        best.gain = gain;
      }
    }
  }
  return best;
}

struct RegStats {
  double n = 0.0, sum = 0.0, sq = 0.0;
};

inline double sse(const RegStats& s) {
  if (s.n == 0.0) return 0.0;
  return std::max(0.0, s.sq - s.sum * s.sum / s.n);
}

}  // namespace detail

/// Greedy CART regression tree (variance reduction). Nodes stop splitting at
/// max_depth, when pure, or when no split leaves min_leaf rows on both sides.
inline DecisionTree tree_regress(const Matrix& rows, std::span<const double> targets, std::size_t max_depth,
                                 std::size_t min_leaf = 1) {
  if (max_depth < 1) throw InputError("tree: max_depth must be at least 1");
  if (rows.empty()) throw InputError("tree: empty training set");
  if (min_leaf < 1) min_leaf = 1;
  DecisionTree tree;
  auto add = [&](detail::RegStats& s, std::size_t i, int sign) {
    const double y = targets[i];
    s.n += sign;
    s.sum += sign * y;
    s.sq += sign * y * y;
  };
  std::function<std::size_t(std::vector<std::size_t>, std::size_t)> grow =
      [&](std::vector<std::size_t> idx, std::size_t depth) -> std::size_t {
    detail::RegStats st;
    for (std::size_t i : idx) add(st, i, +1);
    double mean = 0.0;
    for (std::size_t i : idx) mean += targets[i];
    mean /= static_cast<double>(idx.size());
    double node_sse = 0.0;
    for (std::size_t i : idx) node_sse += (targets[i] - mean) * (targets[i] - mean);

    const std::size_t id = tree.nodes.size();
    tree.nodes.push_back(TreeNode{});
    tree.nodes[id].value = mean;
    tree.depth = std::max(tree.depth, depth);
    if (depth >= max_depth || node_sse == 0.0 || idx.size() < 2 * min_leaf) return id;

    auto cost = [](const detail::RegStats& s) { return detail::sse(s); };
    const auto split = detail::best_split(rows, idx, min_leaf, detail::RegStats{}, add, cost, detail::sse(st));
    if (split.feature < 0) return id;
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (rows[i][static_cast<std::size_t>(split.feature)] < split.threshold ? l : r).push_back(i);
    const std::size_t left = grow(std::move(l), depth + 1);
    const std::size_t right = grow(std::move(r), depth + 1);
    tree.nodes[id].feature = split.feature;
    tree.nodes[id].threshold = split.threshold;
    tree.nodes[id].left = left;
    tree.nodes[id].right = right;
    return id;
  };
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  grow(std::move(all), 0);
  return tree;
}

/// Greedy CART classification tree (Gini). Leaves predict the majority
/// class, ties going to the smallest class id.
inline DecisionTree tree_classify(const Matrix& rows, const std::vector<int>& labels, std::size_t n_classes,
                                  std::size_t max_depth, std::size_t min_leaf = 1) {
  if (max_depth < 1) throw InputError("tree: max_depth must be at least 1");
  if (rows.empty()) throw InputError("tree: empty training set");
  if (min_leaf < 1) min_leaf = 1;
  using Counts = std::vector<double>;
  auto add = [&](Counts& c, std::size_t i, int sign) { c[static_cast<std::size_t>(labels[i])] += sign; };
  auto cost = [](const Counts& c) {
    double n = 0.0, sq = 0.0;
    for (double v : c) {
      n += v;
      sq += v * v;
    }
    return n == 0.0 ? 0.0 : n - sq / n;  // n * Gini
  };
  DecisionTree tree;
  std::function<std::size_t(std::vector<std::size_t>, std::size_t)> grow =
      [&](std::vector<std::size_t> idx, std::size_t depth) -> std::size_t {
    Counts counts(n_classes, 0.0);
    for (std::size_t i : idx) add(counts, i, +1);
    const std::size_t id = tree.nodes.size();
    tree.nodes.push_back(TreeNode{});
    tree.nodes[id].label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    tree.depth = std::max(tree.depth, depth);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double v) { return v > 0; }) <= 1;
    if (depth >= max_depth || pure || idx.size() < 2 * min_leaf) return id;
    const auto split = detail::best_split(rows, idx, min_leaf, Counts(n_classes, 0.0), add, cost, cost(counts));
    if (split.feature < 0) return id;
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (rows[i][static_cast<std::size_t>(split.feature)] < split.threshold ? l : r).push_back(i);
    const std::size_t left = grow(std::move(l), depth + 1);
    const std::size_t right = grow(std::move(r), depth + 1);
    tree.nodes[id].feature = split.feature;
    tree.nodes[id].threshold = split.threshold;
    tree.nodes[id].left = left;
    tree.nodes[id].right = right;
    return id;
  };
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  grow(std::move(all), 0);
  return tree;
}

// ---------------------------------------------------------------------------
// Naive Bayes

namespace detail {

inline std::size_t count_classes(const std::vector<int>& labels, std::size_t n_classes) {
  std::vector<bool> seen(n_classes, false);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) throw InputError("class id out of range");
    seen[static_cast<std::size_t>(l)] = true;
  }
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

inline int argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c) {
    if (v[c] > v[best]) best = c;
  }
  return static_cast<int>(best);
}

inline Vector softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double z = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) z += (p[c] = std::exp(logits[c] - m));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace detail

class GaussianNB {
 public:
  static constexpr double kVarianceFloor = 1e-9;

  GaussianNB(const Matrix& rows, const std::vector<int>& labels, std::size_t n_classes) {
    if (rows.empty() || rows.size() != labels.size()) throw InputError("gaussian_nb: bad training set");
    if (detail::count_classes(labels, n_classes) < 2) throw InputError("gaussian_nb: need at least 2 classes");
    const std::size_t d = rows.front().size();
    log_prior_.assign(n_classes, -std::numeric_limits<double>::infinity());
    mean_.assign(n_classes, Vector(d, 0.0));
    var_.assign(n_classes, Vector(d, 0.0));
    std::vector<double> n(n_classes, 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      n[c] += 1.0;
      for (std::size_t f = 0; f < d; ++f) mean_[c][f] += rows[i][f];
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (n[c] == 0.0) continue;
      for (auto& m : mean_[c]) m /= n[c];
      log_prior_[c] = std::log(n[c] / static_cast<double>(rows.size()));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      for (std::size_t f = 0; f < d; ++f) {
        const double r = rows[i][f] - mean_[c][f];
        var_[c][f] += r * r;
      }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      for (auto& v : var_[c]) v = std::max(n[c] > 0 ? v / n[c] : 0.0, kVarianceFloor);
    }
  }

  Vector log_joint(std::span<const double> x) const {
    Vector out(log_prior_.size());
    for (std::size_t c = 0; c < out.size(); ++c) {
      double s = log_prior_[c];
      for (std::size_t f = 0; f < x.size(); ++f) {
        const double r = x[f] - mean_[c][f];
        s += -0.5 * std::log(2.0 * 3.14159265358979323846 * var_[c][f]) - r * r / (2.0 * var_[c][f]);
      }
      out[c] = s;
    }
    return out;
  }
  Vector posterior(std::span<const double> x) const { return detail::softmax(log_joint(x)); }
  int predict(std::span<const double> x) const { return detail::argmax_lowest(log_joint(x)); }

  const Matrix& means() const { return mean_; }
  const Matrix& variances() const { return var_; }

 private:
  Vector log_prior_;
  Matrix mean_;
  Matrix var_;
};

/// Features are binarized as x > threshold; bit probabilities use Laplace
/// smoothing (count + 1) / (n_c + 2).
class BernoulliNB {
 public:
  BernoulliNB(const Matrix& rows, const std::vector<int>& labels, std::size_t n_classes, double threshold = 0.0)
      : threshold_(threshold) {
    if (rows.empty() || rows.size() != labels.size()) throw InputError("bernoulli_nb: bad training set");
    if (detail::count_classes(labels, n_classes) < 2) throw InputError("bernoulli_nb: need at least 2 classes");
    const std::size_t d = rows.front().size();
    std::vector<double> n(n_classes, 0.0);
    Matrix ones(n_classes, Vector(d, 0.0));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      n[c] += 1.0;
      for (std::size_t f = 0; f < d; ++f) ones[c][f] += rows[i][f] > threshold_ ? 1.0 : 0.0;
    }
    log_prior_.assign(n_classes, -std::numeric_limits<double>::infinity());
    prob_.assign(n_classes, Vector(d, 0.5));
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (n[c] > 0) log_prior_[c] = std::log(n[c] / static_cast<double>(rows.size()));
      for (std::size_t f = 0; f < d; ++f) prob_[c][f] = (ones[c][f] + 1.0) / (n[c] + 2.0);
    }
  }

  Vector log_joint(std::span<const double> x) const {
    Vector out(log_prior_.size());
    for (std::size_t c = 0; c < out.size(); ++c) {
      double s = log_prior_[c];
      for (std::size_t f = 0; f < x.size(); ++f) {
        s += x[f] > threshold_ ? std::log(prob_[c][f]) : std::log1p(-prob_[c][f]);
      }
      out[c] = s;
    }
    return out;
  }
  Vector posterior(std::span<const double> x) const { return detail::softmax(log_joint(x)); }
  int predict(std::span<const double> x) const { return detail::argmax_lowest(log_joint(x)); }

  const Matrix& bit_probabilities() const { return prob_; }

 private:
  double threshold_;
  Vector log_prior_;
  Matrix prob_;
};

// ---------------------------------------------------------------------------
// Linear SVM

struct SvmHyper {
  double lr = 0.01;
  std::size_t epochs = 200;
  double C = 1.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Binary primal objective 0.5 ||w||^2 + C * mean(hinge), labels in {-1, +1}.
struct BinarySvm {
  Vector w;
  double b = 0.0;
  Vector objective_history;

  double decision(std::span<const double> x) const {
    double s = b;
    for (std::size_t f = 0; f < w.size(); ++f) s += w[f] * x[f];
    return s;
  }
};

inline double svm_objective(const BinarySvm& m, const Matrix& rows, std::span<const double> y, double C) {
  double reg = 0.0;
  for (double v : m.w) reg += v * v;
  double hinge = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) hinge += std::max(0.0, 1.0 - y[i] * m.decision(rows[i]));
  return 0.5 * reg + C * hinge / static_cast<double>(rows.size());
}

/// Mini-batch subgradient descent from w = 0, b = 0 with a seeded shuffle.
inline BinarySvm train_binary_svm(const Matrix& rows, std::span<const double> y, const SvmHyper& h) {
  if (rows.empty()) throw InputError("svm: empty training set");
  bool pos = false, neg = false;
  for (double v : y) {
    if (v > 0) pos = true;
    else neg = true;
  }
  if (!pos || !neg) throw InputError("svm: single-class training set");
  const std::size_t d = rows.front().size();
  BinarySvm m{Vector(d, 0.0), 0.0, {}};
  Rng rng(h.seed);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t bs = std::max<std::size_t>(1, h.batch_size);
  Vector gw(d);
  for (std::size_t epoch = 0; epoch < h.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      const double scale = h.C / static_cast<double>(end - start);
      for (std::size_t f = 0; f < d; ++f) gw[f] = m.w[f];
      double gb = 0.0;
      for (std::size_t p = start; p < end; ++p) {
        const std::size_t i = order[p];
        if (y[i] * m.decision(rows[i]) < 1.0) {
          for (std::size_t f = 0; f < d; ++f) gw[f] -= scale * y[i] * rows[i][f];
          gb -= scale * y[i];
        }
      }
      for (std::size_t f = 0; f < d; ++f) m.w[f] -= h.lr * gw[f];
      m.b -= h.lr * gb;
    }
    m.objective_history.push_back(svm_objective(m, rows, y, h.C));
  }
  return m;
}

/// Binary problems train one machine (class 1 positive); more classes use
/// one-vs-rest with argmax decision, ties to the lowest class.
class LinearSvm {
 public:
  LinearSvm(const Matrix& rows, const std::vector<int>& labels, std::size_t n_classes, const SvmHyper& h)
      : n_classes_(n_classes) {
    if (detail::count_classes(labels, n_classes) < 2) throw InputError("svm: single-class training set");
    const std::size_t machines = n_classes == 2 ? 1 : n_classes;
    for (std::size_t c = 0; c < machines; ++c) {
      const int positive = n_classes == 2 ? 1 : static_cast<int>(c);
      Vector y(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == positive ? 1.0 : -1.0;
      bool has_pos = std::count(y.begin(), y.end(), 1.0) > 0;
      if (!has_pos) {
        // Absent class in one-vs-rest: never predicted.
        machines_.push_back(BinarySvm{Vector(rows.front().size(), 0.0), -1e300, {}});
        continue;
      }
      machines_.push_back(train_binary_svm(rows, y, h));
    }
  }

  int predict(std::span<const double> x) const {
    if (n_classes_ == 2) return machines_[0].decision(x) > 0.0 ? 1 : 0;
    Vector s(machines_.size());
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = machines_[c].decision(x);
    return detail::argmax_lowest(s);
  }

  const std::vector<BinarySvm>& machines() const { return machines_; }

 private:
  std::size_t n_classes_;
  std::vector<BinarySvm> machines_;
};

// ---------------------------------------------------------------------------
// Metrics

struct RegressionMetrics {
  double score = 0.0;             // coefficient of determination
  double estimation_error = 0.0;  // root mean squared error
};

struct ClassificationMetrics {
  double precision = 0.0;  // macro-averaged
  double accuracy = 0.0;
};

inline RegressionMetrics evaluate_regression(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw InputError("evaluate_regression: length mismatch");
  if (truth.empty()) throw InputError("evaluate_regression: empty input");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  RegressionMetrics m;
  m.estimation_error = std::sqrt(ss_res / static_cast<double>(truth.size()));
  if (ss_tot == 0.0) {
    if (ss_res != 0.0) throw ComputationError("evaluate_regression: constant truth with imperfect prediction (score is -inf)");
    m.score = 1.0;
  } else {
    m.score = 1.0 - ss_res / ss_tot;
  }
  return m;
}

/// Macro precision over every class seen in truth or predictions; a class
/// that is never predicted contributes 0.
inline ClassificationMetrics evaluate_classification(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw InputError("evaluate_classification: length mismatch");
  if (truth.empty()) throw InputError("evaluate_classification: empty input");
  std::map<int, std::pair<double, double>> per_class;  // class -> (true positives, predicted)
  double correct = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    per_class[truth[i]];
    auto& pc = per_class[pred[i]];
    pc.second += 1.0;
    if (pred[i] == truth[i]) {
      pc.first += 1.0;
      correct += 1.0;
    }
  }
  double sum = 0.0;
  for (const auto& [c, tp_pred] : per_class) sum += tp_pred.second > 0 ? tp_pred.first / tp_pred.second : 0.0;
  return {sum / static_cast<double>(per_class.size()), correct / static_cast<double>(truth.size())};
}

// ---------------------------------------------------------------------------
// Benchmark report

inline const std::vector<std::string>& regression_techniques() {
  static const std::vector<std::string> names{"Decision tree", "KNN", "Ridge", "Linear Regression", "Proposed MLDM"};
  return names;
}

inline const std::vector<std::string>& classification_techniques() {
  static const std::vector<std::string> names{"Gaussiandistribution", "Bernoulis approximation", "Decision tree",
                                              "Support vector machine (SVM)", "Proposed MLDM (extension)"};
  return names;
}

struct BenchRow {
  std::string technique;
  std::optional<double> first;
  std::optional<double> second;
  std::string error;
};

struct BenchTable {
  std::string title;
  std::string first_column;
  std::string second_column;
  std::vector<BenchRow> rows;
};

struct BenchReport {
  BenchTable numerical;
  std::optional<BenchTable> categorical;
  std::string notice;
};

inline BenchTable make_numerical_table() {
  return {"Numerical Prediction accuracy for the fields estimated", "Statistical analysis", "Estimation error", {}};
}

inline BenchTable make_categorical_table() {
  return {"Categorical Prediction accuracy for the fields estimated", "Precision value", "Accuracy", {}};
}

/// Six significant digits, shortest form.
inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string render_cell(const BenchRow& row, const std::optional<double>& v) {
  if (!row.error.empty()) return "error";
  return v ? format_metric(*v) : "n/a";
}

inline void render_markdown(std::ostream& out, const BenchReport& report) {
  auto table = [&](const BenchTable& t) {
    out << "### " << t.title << "\n\n";
    out << "| Techniques applied | " << t.first_column << " | " << t.second_column << " |\n";
    out << "|---|---|---|\n";
    for (const auto& r : t.rows) {
      out << "| " << r.technique << " | " << render_cell(r, r.first) << " | " << render_cell(r, r.second) << " |\n";
    }
    bool any_error = false;
    for (const auto& r : t.rows) any_error |= !r.error.empty();
    if (any_error) {
      out << '\n';
      for (const auto& r : t.rows) {
        if (!r.error.empty()) out << "- " << r.technique << ": " << r.error << '\n';
      }
    }
    out << '\n';
  };
  table(report.numerical);
  if (report.categorical) {
    table(*report.categorical);
  } else {
    out << "### " << make_categorical_table().title << "\n\n" << report.notice << "\n";
  }
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

inline void render_csv(std::ostream& out, const BenchReport& report) {
  out << "table,technique,metric,value,error\n";
  auto table = [&](const std::string& name, const BenchTable& t) {
    for (const auto& r : t.rows) {
      out << name << ',' << csv_escape(r.technique) << ',' << csv_escape(t.first_column) << ','
          << render_cell(r, r.first) << ',' << csv_escape(r.error) << '\n';
      out << name << ',' << csv_escape(r.technique) << ',' << csv_escape(t.second_column) << ','
          << render_cell(r, r.second) << ',' << csv_escape(r.error) << '\n';
    }
  };
  table("numerical", report.numerical);
  if (report.categorical) table("categorical", *report.categorical);
}

inline nlohmann::json bench_json(const BenchReport& report) {
  auto table = [](const BenchTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows) {
      nlohmann::json jr{{"Techniques applied", r.technique}};
      jr[t.first_column] = r.first ? nlohmann::json(*r.first) : nlohmann::json(nullptr);
      jr[t.second_column] = r.second ? nlohmann::json(*r.second) : nlohmann::json(nullptr);
      if (!r.error.empty()) jr["error"] = r.error;
      rows.push_back(std::move(jr));
    }
    return nlohmann::json{{"title", t.title}, {"columns", {"Techniques applied", t.first_column, t.second_column}},
                          {"rows", std::move(rows)}};
  };
  nlohmann::json j{{"numerical", table(report.numerical)}};
  if (report.categorical) {
    j["categorical"] = table(*report.categorical);
  } else {
    j["categorical"] = nullptr;
    j["notice"] = report.notice;
  }
  return j;
}

struct BenchConfig {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::size_t knn_k = 10;
  DistanceMetric knn_metric = DistanceMetric::euclidean();
  double ridge_lambda = 1.0;
  std::size_t tree_max_depth = 6;
  std::size_t tree_min_leaf = 5;
  double bernoulli_threshold = 0.0;
  SvmHyper svm;
  bool parallel = false;
};

/// Predictions of the proposed pipeline for `test` after training on `train`.
using ProposedRegressor = std::function<Vector(const Dataset& train, const Dataset& test)>;

namespace detail {

template <class Fn>
BenchRow guarded_row(const std::string& name, Fn&& fn) {
  BenchRow row{name, std::nullopt, std::nullopt, {}};
  try {
    const auto [a, b] = fn();
    row.first = a;
    row.second = b;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

inline std::vector<BenchRow> run_rows(std::vector<std::pair<std::string, std::function<std::pair<double, double>()>>> jobs,
                                      bool parallel) {
  std::vector<BenchRow> rows;
  if (parallel) {
    std::vector<std::future<BenchRow>> fut;
    for (auto& [name, fn] : jobs) {
      fut.push_back(std::async(std::launch::async, [n = name, f = fn] { return guarded_row(n, f); }));
    }
    for (auto& f : fut) rows.push_back(f.get());
  } else {
    for (auto& [name, fn] : jobs) rows.push_back(guarded_row(name, fn));
  }
  return rows;
}

}  // namespace detail

/// Trains every baseline and the proposed model on `train`, evaluates on
/// `test`. Baseline features are z-scored with statistics from `train`. A
/// model that throws yields an error-annotated row.
inline BenchReport bench(const Dataset& train, const Dataset& test, const BenchConfig& cfg,
                         const ProposedRegressor& proposed) {
  train.validate();
  test.validate();
  const NormParams norm = NormParams::fit(train.rows);
  Matrix xtr, xte;
  for (const auto& r : train.rows) xtr.push_back(norm.apply(r));
  for (const auto& r : test.rows) xte.push_back(norm.apply(r));
  const Vector& ytr = train.targets;
  const Vector& yte = test.targets;

  auto regress = [&](auto predict_one) {
    Vector pred;
    pred.reserve(xte.size());
    for (const auto& x : xte) pred.push_back(predict_one(x));
    const auto m = evaluate_regression(pred, yte);
    return std::pair{m.score, m.estimation_error};
  };

  BenchReport report;
  report.numerical = make_numerical_table();
  const auto& names = regression_techniques();
  report.numerical.rows = detail::run_rows(
      {{names[0], [&] {
          const auto t = tree_regress(xtr, ytr, cfg.tree_max_depth, cfg.tree_min_leaf);
          return regress([&](const Vector& x) { return t.predict(x); });
        }},
       {names[1], [&] {
          const std::size_t k = std::min(cfg.knn_k, xtr.size());
          return regress([&](const Vector& x) { return knn_regress(xtr, ytr, x, k, cfg.knn_metric); });
        }},
       {names[2], [&] {
          const auto m = ridge_regress(xtr, ytr, cfg.ridge_lambda);
          return regress([&](const Vector& x) { return m.predict(x); });
        }},
       {names[3], [&] {
          const auto m = ols_regress(xtr, ytr);
          return regress([&](const Vector& x) { return m.predict(x); });
        }},
       {names[4], [&] {
          const Vector pred = proposed(train, test);
          const auto m = evaluate_regression(pred, yte);
          return std::pair{m.score, m.estimation_error};
        }}},
      cfg.parallel);

  if (!train.has_labels() || !test.has_labels()) {
    report.notice = "Categorical table omitted: the dataset has no label column.";
    return report;
  }

  auto vocab = label_vocabulary(*train.labels);
  {
    auto test_vocab = label_vocabulary(*test.labels);
    std::vector<std::string> merged;
    std::set_union(vocab.begin(), vocab.end(), test_vocab.begin(), test_vocab.end(), std::back_inserter(merged));
    vocab = std::move(merged);
  }
  const auto ltr = encode_labels(*train.labels, vocab);
  const auto lte = encode_labels(*test.labels, vocab);
  const std::size_t n_classes = vocab.size();

  auto classify = [&](auto predict_one) {
    std::vector<int> pred;
    pred.reserve(xte.size());
    for (const auto& x : xte) pred.push_back(predict_one(x));
    const auto m = evaluate_classification(pred, lte);
    return std::pair{m.precision, m.accuracy};
  };

  BenchTable cat = make_categorical_table();
  const auto& cnames = classification_techniques();
  cat.rows = detail::run_rows(
      {{cnames[0], [&] {
          const GaussianNB nb(xtr, ltr, n_classes);
          return classify([&](const Vector& x) { return nb.predict(x); });
        }},
       {cnames[1], [&] {
          const BernoulliNB nb(xtr, ltr, n_classes, cfg.bernoulli_threshold);
          return classify([&](const Vector& x) { return nb.predict(x); });
        }},
       {cnames[2], [&] {
          const auto t = tree_classify(xtr, ltr, n_classes, cfg.tree_max_depth, cfg.tree_min_leaf);
          return classify([&](const Vector& x) { return t.classify(x); });
        }},
       {cnames[3], [&] {
          const LinearSvm svm(xtr, ltr, n_classes, cfg.svm);
          return classify([&](const Vector& x) { return svm.predict(x); });
        }},
       {cnames[4], [&] {
          if (n_classes != 2) throw InputError("extension row supports binary labels only");
          // Regress the class-1 indicator, then threshold the prediction at 0.5.
          Dataset tr = train;
          Dataset te = test;
          for (std::size_t i = 0; i < tr.size(); ++i) tr.targets[i] = ltr[i] == 1 ? 1.0 : 0.0;
          for (std::size_t i = 0; i < te.size(); ++i) te.targets[i] = lte[i] == 1 ? 1.0 : 0.0;
          const Vector raw = proposed(tr, te);
          std::vector<int> pred;
          for (double v : raw) pred.push_back(v > 0.5 ? 1 : 0);
          const auto m = evaluate_classification(pred, lte);
          return std::pair{m.precision, m.accuracy};
        }}},
      cfg.parallel);
  report.categorical = std::move(cat);
  return report;
}

}  // namespace mcdl
