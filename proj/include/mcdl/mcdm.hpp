#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mcdl/common.hpp"

namespace mcdl {

/// How neighbor coefficients are formed: `plain` uses mu, `mutual` scales mu
/// by (shared-neighbor count + 1).
enum class Weighting { plain, mutual };

inline const char* to_string(Weighting w) { return w == Weighting::plain ? "plain" : "mutual"; }

inline Weighting parse_weighting(const std::string& s) {
  if (s == "plain") return Weighting::plain;
  if (s == "mutual") return Weighting::mutual;
  throw ConfigError("unknown weighting mode '" + s + "' (expected plain or mutual)");
}

/// One alternative. `neighbors` holds agent ids in ascending order.
struct Agent {
  int id = 0;
  double b = 0.0;
  Vector criteria;
  std::vector<int> neighbors;
};

class AgentGraph {
 public:
  AgentGraph() = default;

  /// Validates ids, neighborhoods and K. Neighbor lists are sorted and deduplicated.
  AgentGraph(std::vector<Agent> agents, double K, bool symmetric = false)
      : agents_(std::move(agents)), K_(K), symmetric_(symmetric) {
    if (!(K_ > 0.0)) throw InputError("agent graph: K must be positive, got " + format_double(K_));
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      if (!index_.emplace(agents_[i].id, i).second) {
        throw InputError("agent graph: duplicate agent id " + std::to_string(agents_[i].id));
      }
    }
    for (auto& a : agents_) {
      std::sort(a.neighbors.begin(), a.neighbors.end());
      a.neighbors.erase(std::unique(a.neighbors.begin(), a.neighbors.end()), a.neighbors.end());
      for (int j : a.neighbors) {
        if (j == a.id) throw InputError("agent graph: agent " + std::to_string(a.id) + " lists itself as a neighbor");
        if (!index_.count(j)) {
          throw InputError("agent graph: agent " + std::to_string(a.id) + " has unknown neighbor " + std::to_string(j));
        }
      }
    }
  }

  const std::vector<Agent>& agents() const { return agents_; }
  std::size_t size() const { return agents_.size(); }
  bool empty() const { return agents_.empty(); }
  double K() const { return K_; }
  bool symmetric() const { return symmetric_; }

  bool contains(int id) const { return index_.count(id) > 0; }

  const Agent& agent(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InputError("unknown agent id " + std::to_string(id));
    return agents_[it->second];
  }

  /// Copy with every benefit multiplied by `c`.
  AgentGraph scaled(double c) const {
    auto copy = agents_;
    for (auto& a : copy) a.b *= c;
    return AgentGraph(std::move(copy), K_, symmetric_);
  }

 private:
  std::vector<Agent> agents_;
  std::unordered_map<int, std::size_t> index_;
  double K_ = 1.0;
  bool symmetric_ = false;
};

/// (b_i + b_j) / K.
inline double mu(double b_i, double b_j, double K) {
  if (!(K > 0.0)) throw InputError("mu: K must be positive, got " + format_double(K));
  return (b_i + b_j) / K;
}

/// ((b_i + b_j) / k) * (C_j + 1), C_j being the common-agent count.
inline double mutual_mu(double b_i, double b_j, double k, long long C_j) {
  if (!(k > 0.0)) throw InputError("mutual_mu: k must be positive, got " + format_double(k));
  if (C_j < 0) throw InputError("mutual_mu: common-agent count must be non-negative");
  return (b_i + b_j) / k * static_cast<double>(C_j + 1);
}

inline std::size_t shared_count(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

namespace detail {

/// Sum over N_i of mu_ij * b_j, visiting neighbors in ascending id order.
/// `lookup(id)` returns the neighbor's Agent.
template <class Lookup>
double neighbor_sum(const Agent& self, double K, Weighting weighting, Lookup&& lookup) {
  double sum = 0.0;
  for (int j : self.neighbors) {
    const Agent& other = lookup(j);
    const double coeff = weighting == Weighting::plain
                             ? mu(self.b, other.b, K)
                             : mutual_mu(self.b, other.b, K,
                                         static_cast<long long>(shared_count(self.neighbors, other.neighbors)));
    sum += coeff * other.b;
  }
  return sum;
}

}  // namespace detail

inline double neighbor_benefit(int agent_id, const AgentGraph& graph, Weighting weighting) {
  const Agent& self = graph.agent(agent_id);
  return detail::neighbor_sum(self, graph.K(), weighting, [&](int j) -> const Agent& { return graph.agent(j); });
}

/// B(a_i) = b(a_i) + b(N_i).
inline double overall_benefit(int agent_id, const AgentGraph& graph, Weighting weighting) {
  return graph.agent(agent_id).b + neighbor_benefit(agent_id, graph, weighting);
}

struct RankEntry {
  int id = 0;
  double score = 0.0;
  bool operator==(const RankEntry&) const = default;
};

/// Descending by score; ties by ascending id.
struct Ranking {
  std::vector<RankEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::vector<int> order() const {
    std::vector<int> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(e.id);
    return ids;
  }
  bool operator==(const Ranking&) const = default;
};

inline bool ranks_before(const RankEntry& a, const RankEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

inline Ranking rank(const AgentGraph& graph, Weighting weighting) {
  if (graph.empty()) throw InputError("rank: empty agent graph");
  Ranking r;
  r.entries.reserve(graph.size());
  for (const auto& a : graph.agents()) r.entries.push_back({a.id, overall_benefit(a.id, graph, weighting)});
  std::sort(r.entries.begin(), r.entries.end(), ranks_before);
  return r;
}

namespace detail {

/// Indices of the k nearest rows to rows[self] (Euclidean), excluding self;
/// ties go to the lower index.
inline std::vector<std::size_t> nearest_rows(const Matrix& rows, std::size_t self, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (j != self) d.emplace_back(squared_distance(rows[self], rows[j]), j);
  }
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < k; ++t) out.push_back(d[t].second);
  return out;
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Agents 0..n-1 from per-alternative criterion values: b = mean of the
/// criteria, N_i = the neighborhood_k nearest alternatives in criteria
/// space, then symmetrized by union. K defaults to neighborhood_k.
inline AgentGraph build_agent_graph(const Matrix& criteria, std::size_t neighborhood_k,
                                    std::optional<double> K = std::nullopt) {
  const std::size_t n = criteria.size();
  if (n < 2) throw InputError("build_agent_graph: need at least 2 alternatives, got " + std::to_string(n));
  if (neighborhood_k < 1 || neighborhood_k >= n) {
    throw InputError("build_agent_graph: neighborhood_k = " + std::to_string(neighborhood_k) +
                     " out of range [1, " + std::to_string(n - 1) + "]");
  }
  const std::size_t d = criteria.front().size();
  if (d == 0) throw InputError("build_agent_graph: alternatives have no criteria");
  for (const auto& c : criteria) {
    if (c.size() != d) throw InputError("build_agent_graph: inconsistent criteria dimensions");
    if (!all_finite(c)) throw InputError("build_agent_graph: non-finite criterion value");
  }
  std::vector<std::set<int>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : detail::nearest_rows(criteria, i, neighborhood_k)) {
      nbrs[i].insert(static_cast<int>(j));
      nbrs[j].insert(static_cast<int>(i));
    }
  }
  std::vector<Agent> agents(n);
  for (std::size_t i = 0; i < n; ++i) {
    agents[i].id = static_cast<int>(i);
    agents[i].criteria = criteria[i];
    agents[i].b = detail::mean(criteria[i]);
    agents[i].neighbors.assign(nbrs[i].begin(), nbrs[i].end());
  }
  return AgentGraph(std::move(agents), K.value_or(static_cast<double>(neighborhood_k)), true);
}

struct ScoreChange {
  int id = 0;
  double before = 0.0;
  double after = 0.0;
};

struct InsertResult {
  int id = 0;
  double b = 0.0;
  double score = 0.0;
  std::vector<int> neighbors;
  /// Existing agents whose B changed (in ascending id order).
  std::vector<ScoreChange> changes;
};

/// Maintains B scores and the ranking order while agents are appended. Each
/// insertion recomputes only the agents whose score can change: the new agent,
/// its neighbors and, for mutual weighting, everyone pointing at a neighbor.
class IncrementalRanker {
 public:
  IncrementalRanker(const AgentGraph& graph, Weighting weighting, std::size_t neighborhood_k)
      : K_(graph.K()), weighting_(weighting), neighborhood_k_(neighborhood_k) {
    if (neighborhood_k_ < 1) throw InputError("incremental ranker: neighborhood_k must be at least 1");
    for (const auto& a : graph.agents()) {
      slot_.emplace(a.id, agents_.size());
      agents_.push_back(a);
      next_id_ = std::max(next_id_, a.id + 1);
    }
    referrers_.resize(agents_.size());
    for (const auto& a : agents_) {
      for (int j : a.neighbors) referrers_[slot_.at(j)].push_back(a.id);
    }
    for (auto& r : referrers_) std::sort(r.begin(), r.end());
    scores_.resize(agents_.size());
    for (std::size_t s = 0; s < agents_.size(); ++s) {
      scores_[s] = score_slot(s);
      order_.insert({-scores_[s], agents_[s].id});
    }
  }

  std::size_t size() const { return agents_.size(); }
  Weighting weighting() const { return weighting_; }

  InsertResult insert(Vector criteria) {
    if (agents_.size() < neighborhood_k_) {
      throw InputError("incremental ranker: fewer agents than neighborhood_k");
    }
    if (!agents_.empty() && criteria.size() != agents_.front().criteria.size()) {
      throw InputError("incremental ranker: criteria dimension mismatch");
    }
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(agents_.size());
    for (std::size_t s = 0; s < agents_.size(); ++s) d.emplace_back(squared_distance(criteria, agents_[s].criteria), s);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(neighborhood_k_), d.end());

    Agent fresh;
    fresh.id = next_id_++;
    fresh.b = detail::mean(criteria);
    fresh.criteria = std::move(criteria);
    for (std::size_t t = 0; t < neighborhood_k_; ++t) fresh.neighbors.push_back(agents_[d[t].second].id);
    std::sort(fresh.neighbors.begin(), fresh.neighbors.end());

    const std::size_t new_slot = agents_.size();
    slot_.emplace(fresh.id, new_slot);
    agents_.push_back(fresh);
    referrers_.emplace_back(fresh.neighbors);
    scores_.push_back(0.0);

    std::set<int> affected;
    for (int j : fresh.neighbors) {
      const std::size_t s = slot_.at(j);
      auto& nb = agents_[s].neighbors;
      nb.insert(std::upper_bound(nb.begin(), nb.end(), fresh.id), fresh.id);
      referrers_[s].push_back(fresh.id);
      affected.insert(j);
      if (weighting_ == Weighting::mutual) {
        for (int r : referrers_[s]) affected.insert(r);
      }
    }
    affected.erase(fresh.id);

    InsertResult result;
    result.id = fresh.id;
    result.b = fresh.b;
    result.neighbors = fresh.neighbors;
    scores_[new_slot] = score_slot(new_slot);
    result.score = scores_[new_slot];
    order_.insert({-result.score, fresh.id});
    for (int id : affected) {
      const std::size_t s = slot_.at(id);
      const double before = scores_[s];
      const double after = score_slot(s);
      if (after == before) continue;
      order_.erase({-before, id});
      order_.insert({-after, id});
      scores_[s] = after;
      result.changes.push_back({id, before, after});
    }
    return result;
  }

  double score(int id) const { return scores_[slot_.at(id)]; }

  /// 0-based position of `id` in the current ranking. Linear time.
  std::size_t position(int id) const {
    const auto it = order_.find({-score(id), id});
    return static_cast<std::size_t>(std::distance(order_.begin(), it));
  }

  Ranking ranking() const {
    Ranking r;
    r.entries.reserve(order_.size());
    for (const auto& [neg, id] : order_) r.entries.push_back({id, -neg});
    return r;
  }

  AgentGraph graph() const { return AgentGraph(agents_, K_, true); }

 private:
  double score_slot(std::size_t s) const {
    const Agent& self = agents_[s];
    return self.b + detail::neighbor_sum(self, K_, weighting_,
                                         [&](int j) -> const Agent& { return agents_[slot_.at(j)]; });
  }

  std::vector<Agent> agents_;
  std::unordered_map<int, std::size_t> slot_;
  std::vector<std::vector<int>> referrers_;
  Vector scores_;
  std::set<std::pair<double, int>> order_;
  double K_;
  Weighting weighting_;
  std::size_t neighborhood_k_;
  int next_id_ = 0;
};

inline void write_ranking_csv(std::ostream& out, const Ranking& r) {
  out << "rank,agent_id,score\n";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    out << (i + 1) << ',' << r.entries[i].id << ',' << format_double(r.entries[i].score) << '\n';
  }
}

inline nlohmann::json ranking_json(const Ranking& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    rows.push_back({{"rank", i + 1}, {"agent_id", r.entries[i].id}, {"score", r.entries[i].score}});
  }
  return nlohmann::json{{"ranking", std::move(rows)}};
}

}  // namespace mcdl
