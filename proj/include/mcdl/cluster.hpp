#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <limits>
#include <vector>

#include "json.hpp"
#include "mcdl/common.hpp"

namespace mcdl {

struct ClusterAssignment {
  Matrix centroids;
  std::vector<std::size_t> membership;
  double wcss = 0.0;
  std::size_t iterations = 0;
  /// WCSS after every assignment step, the last entry being the final one.
  std::vector<double> wcss_history;
};

namespace detail {

inline std::size_t count_distinct(const Matrix& points) {
  Matrix sorted = points;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

/// Nearest centroid under squared Euclidean distance; ties go to the lowest index.
inline std::pair<std::size_t, double> nearest(const Matrix& centroids, std::span<const double> p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

inline Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  Matrix centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.index(n)]);
  Vector d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    const double target = rng.uniform() * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] == 0.0) continue;
      acc += d2[i];
      pick = i;
      if (acc > target) break;
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
  }
  return centroids;
}

}  // namespace detail

/// Lloyd's algorithm from a seeded k-means++ start. Stops when no centroid
/// moves by `tol` or more (Euclidean), or after `max_iter` update steps.
/// The returned membership is always the nearest-centroid assignment for the
/// returned centroids.
inline ClusterAssignment kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                                std::size_t max_iter = 100, double tol = 1e-6) {
  if (points.empty()) throw InputError("kmeans: empty input");
  if (k < 1) throw InputError("kmeans: k must be at least 1");
  if (max_iter < 1) throw InputError("kmeans: max_iter must be at least 1");
  if (!(tol >= 0.0)) throw InputError("kmeans: tol must be non-negative");
  const std::size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) throw InputError("kmeans: points have inconsistent dimensions");
  }
  const std::size_t distinct = detail::count_distinct(points);
  if (k > distinct) {
    throw InputError("kmeans: k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                     " distinct points");
  }

  const std::size_t n = points.size();
  Rng rng(seed);
  ClusterAssignment out;
  out.centroids = detail::kmeanspp_seed(points, k, rng);
  out.membership.assign(n, 0);
  Vector dist(n);

  auto assign = [&] {
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [c, d2] = detail::nearest(out.centroids, points[i]);
      out.membership[i] = c;
      dist[i] = d2;
      wcss += d2;
    }
    out.wcss = wcss;
    out.wcss_history.push_back(wcss);
  };

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    assign();
    Matrix next(k, Vector(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = next[out.membership[i]];
      for (std::size_t f = 0; f < d; ++f) c[f] += points[i][f];
      ++counts[out.membership[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (auto& v : next[c]) v /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its own centroid.
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      next[c] = points[far];
      dist[far] = 0.0;
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(squared_distance(next[c], out.centroids[c])));
    }
    out.centroids = std::move(next);
    out.iterations = iter + 1;
    if (movement < tol) break;
  }
  assign();
  return out;
}

/// Best of several seeded runs (lowest WCSS, earliest seed on ties).
inline ClusterAssignment kmeans_restarts(const Matrix& points, std::size_t k, std::span<const std::uint64_t> seeds,
                                         std::size_t max_iter = 100, double tol = 1e-6) {
  if (seeds.empty()) throw InputError("kmeans_restarts: no seeds");
  ClusterAssignment best = kmeans(points, k, seeds[0], max_iter, tol);
  for (std::size_t s = 1; s < seeds.size(); ++s) {
    auto run = kmeans(points, k, seeds[s], max_iter, tol);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

struct TreeConfig {
  std::size_t branching_k = 2;
  std::size_t max_depth = 5;
  std::size_t min_leaf_size = 20;
  /// Mean squared distance to the centroid above which a cluster is split again.
  double quality_threshold = 0.25;
  std::size_t max_iter = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (branching_k < 2) throw ConfigError("cluster.branching_k must be at least 2");
    if (max_depth < 1) throw ConfigError("cluster.max_depth must be at least 1");
    if (min_leaf_size < 1) throw ConfigError("cluster.min_leaf_size must be at least 1");
    if (!(quality_threshold >= 0.0)) throw ConfigError("cluster.quality_threshold must be non-negative");
    if (max_iter < 1) throw ConfigError("cluster.max_iter must be at least 1");
    if (!(tol >= 0.0)) throw ConfigError("cluster.tol must be non-negative");
  }
};

struct ClusterNode {
  Vector centroid;
  std::size_t depth = 0;
  /// Mean squared distance of members to the centroid.
  double quality = 0.0;
  std::size_t size = 0;
  std::vector<std::size_t> children;
  // Leaf payload.
  std::vector<std::size_t> members;
  std::ptrdiff_t leaf_id = -1;
  /// Leaf that would have been split further but hit max_depth.
  bool forced = false;

  bool is_leaf() const { return children.empty(); }
};

/// Hierarchical k-means tree. `nodes[0]` is the root; nodes are stored in
/// depth-first pre-order and leaves are numbered in that order.
struct ClusterTree {
  std::vector<ClusterNode> nodes;
  std::vector<std::size_t> leaves;
  std::size_t dim = 0;
  std::size_t depth = 0;
  TreeConfig config;

  std::size_t leaf_count() const { return leaves.size(); }
  const ClusterNode& leaf(std::size_t leaf_id) const { return nodes[leaves[leaf_id]]; }
};

namespace detail {

struct Subtree {
  Vector centroid;
  double quality = 0.0;
  std::vector<std::size_t> members;
  std::vector<Subtree> children;
  bool forced = false;
};

inline Vector mean_of(const Matrix& rows, std::span<const std::size_t> members) {
  Vector c(rows[members[0]].size(), 0.0);
  for (std::size_t i : members) {
    for (std::size_t f = 0; f < c.size(); ++f) c[f] += rows[i][f];
  }
  for (auto& v : c) v /= static_cast<double>(members.size());
  return c;
}

inline double mean_sq_dist(const Matrix& rows, std::span<const std::size_t> members, const Vector& c) {
  double s = 0.0;
  for (std::size_t i : members) s += squared_distance(rows[i], c);
  return s / static_cast<double>(members.size());
}

inline Subtree grow(const Matrix& rows, std::vector<std::size_t> members, Vector centroid, std::size_t depth,
                    std::uint64_t seed, const TreeConfig& cfg, bool parallel) {
  Subtree node;
  node.quality = mean_sq_dist(rows, members, centroid);
  node.centroid = std::move(centroid);
  node.members = std::move(members);

  const bool big_enough = node.members.size() >= 2 * cfg.min_leaf_size;
  const bool poor = depth == 0 || node.quality > cfg.quality_threshold;
  if (!big_enough || !poor) return node;
  if (depth >= cfg.max_depth) {
    node.forced = true;
    return node;
  }

  Matrix pts;
  pts.reserve(node.members.size());
  for (std::size_t i : node.members) pts.push_back(rows[i]);
  if (count_distinct(pts) < cfg.branching_k) return node;

  const auto fit = kmeans(pts, cfg.branching_k, seed, cfg.max_iter, cfg.tol);
  std::vector<std::vector<std::size_t>> groups(cfg.branching_k);
  for (std::size_t j = 0; j < node.members.size(); ++j) groups[fit.membership[j]].push_back(node.members[j]);
  // A split that would leave a child under the size floor is rejected.
  for (const auto& g : groups) {
    if (g.size() < cfg.min_leaf_size) return node;
  }

  node.children.resize(cfg.branching_k);
  if (parallel) {
    std::vector<std::future<Subtree>> jobs;
    for (std::size_t c = 0; c < cfg.branching_k; ++c) {
      jobs.push_back(std::async(std::launch::async, grow, std::cref(rows), std::move(groups[c]), fit.centroids[c],
                                depth + 1, mix_seed(seed, c), std::cref(cfg), parallel));
    }
    for (std::size_t c = 0; c < cfg.branching_k; ++c) node.children[c] = jobs[c].get();
  } else {
    for (std::size_t c = 0; c < cfg.branching_k; ++c) {
      node.children[c] = grow(rows, std::move(groups[c]), fit.centroids[c], depth + 1, mix_seed(seed, c), cfg, false);
    }
  }
  node.members.clear();
  return node;
}

inline std::size_t flatten(Subtree& sub, std::size_t depth, ClusterTree& tree) {
  const std::size_t id = tree.nodes.size();
  tree.nodes.emplace_back();
  {
    auto& n = tree.nodes[id];
    n.centroid = std::move(sub.centroid);
    n.depth = depth;
    n.quality = sub.quality;
    n.forced = sub.forced;
  }
  tree.depth = std::max(tree.depth, depth);
  if (sub.children.empty()) {
    auto& n = tree.nodes[id];
    n.size = sub.members.size();
    n.members = std::move(sub.members);
    n.leaf_id = static_cast<std::ptrdiff_t>(tree.leaves.size());
    tree.leaves.push_back(id);
    return id;
  }
  std::size_t total = 0;
  for (auto& child : sub.children) {
    const std::size_t cid = flatten(child, depth + 1, tree);
    tree.nodes[id].children.push_back(cid);
    total += tree.nodes[cid].size;
  }
  tree.nodes[id].size = total;
  return id;
}

}  // namespace detail

/// Builds the cluster tree over `rows`. The root is always clustered (when it
/// holds at least 2 * min_leaf_size rows); deeper clusters are split again
/// only while their quality exceeds the threshold. Leaves carry member row
/// indices; models are attached by the caller using `leaf_id`.
inline ClusterTree build_hierarchy(const Matrix& rows, const TreeConfig& config, bool parallel = false) {
  config.validate();
  if (rows.empty()) throw InputError("build_hierarchy: empty dataset");
  const std::size_t d = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != d) throw InputError("build_hierarchy: rows have inconsistent dimensions");
  }
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Vector root_centroid = detail::mean_of(rows, all);
  auto sub = detail::grow(rows, std::move(all), std::move(root_centroid), 0, config.seed, config, parallel);

  ClusterTree tree;
  tree.dim = d;
  tree.config = config;
  detail::flatten(sub, 0, tree);
  return tree;
}

struct LeafRoute {
  std::size_t leaf_id = 0;
  std::size_t comparisons = 0;
};

/// Descends from the root to the nearest child centroid at each level.
inline LeafRoute route_to_leaf(const ClusterTree& tree, std::span<const double> point) {
  if (point.size() != tree.dim) {
    throw InputError("assign_leaf: point dimension " + std::to_string(point.size()) + " does not match tree dimension " +
                     std::to_string(tree.dim));
  }
  LeafRoute route;
  std::size_t node = 0;
  while (!tree.nodes[node].is_leaf()) {
    const auto& kids = tree.nodes[node].children;
    std::size_t best = kids[0];
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t child : kids) {
      const double dd = squared_distance(tree.nodes[child].centroid, point);
      ++route.comparisons;
      if (dd < best_d) {
        best_d = dd;
        best = child;
      }
    }
    node = best;
  }
  route.leaf_id = static_cast<std::size_t>(tree.nodes[node].leaf_id);
  return route;
}

inline std::size_t assign_leaf(const ClusterTree& tree, std::span<const double> point) {
  return route_to_leaf(tree, point).leaf_id;
}

inline void to_json(nlohmann::json& j, const TreeConfig& c) {
  j = nlohmann::json{{"branching_k", c.branching_k}, {"max_depth", c.max_depth},
                     {"min_leaf_size", c.min_leaf_size}, {"quality_threshold", c.quality_threshold},
                     {"max_iter", c.max_iter}, {"tol", c.tol}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TreeConfig& c) {
  j.at("branching_k").get_to(c.branching_k);
  j.at("max_depth").get_to(c.max_depth);
  j.at("min_leaf_size").get_to(c.min_leaf_size);
  j.at("quality_threshold").get_to(c.quality_threshold);
  j.at("max_iter").get_to(c.max_iter);
  j.at("tol").get_to(c.tol);
  j.at("seed").get_to(c.seed);
}

inline void to_json(nlohmann::json& j, const ClusterTree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    nlohmann::json jn{{"centroid", n.centroid}, {"depth", n.depth}, {"quality", n.quality},
                      {"size", n.size}, {"children", n.children}};
    if (n.is_leaf()) {
      jn["leaf_id"] = n.leaf_id;
      jn["members"] = n.members;
      jn["forced"] = n.forced;
    }
    nodes.push_back(std::move(jn));
  }
  j = nlohmann::json{{"dim", t.dim}, {"depth", t.depth}, {"config", t.config},
                     {"leaves", t.leaves}, {"nodes", std::move(nodes)}};
}

inline void from_json(const nlohmann::json& j, ClusterTree& t) {
  j.at("dim").get_to(t.dim);
  j.at("depth").get_to(t.depth);
  j.at("config").get_to(t.config);
  j.at("leaves").get_to(t.leaves);
  t.nodes.clear();
  for (const auto& jn : j.at("nodes")) {
    ClusterNode n;
    jn.at("centroid").get_to(n.centroid);
    jn.at("depth").get_to(n.depth);
    jn.at("quality").get_to(n.quality);
    jn.at("size").get_to(n.size);
    jn.at("children").get_to(n.children);
    if (jn.contains("leaf_id")) {
      jn.at("leaf_id").get_to(n.leaf_id);
      jn.at("members").get_to(n.members);
      jn.at("forced").get_to(n.forced);
    }
    t.nodes.push_back(std::move(n));
  }
  for (const auto& n : t.nodes) {
    if (n.centroid.size() != t.dim) throw InputError("cluster tree: centroid dimension mismatch");
    for (std::size_t c : n.children) {
      if (c >= t.nodes.size()) throw InputError("cluster tree: child index out of range");
    }
  }
  for (std::size_t l = 0; l < t.leaves.size(); ++l) {
    if (t.leaves[l] >= t.nodes.size() || t.nodes[t.leaves[l]].leaf_id != static_cast<std::ptrdiff_t>(l)) {
      throw InputError("cluster tree: inconsistent leaf table");
    }
  }
}

}  // namespace mcdl
