#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mcdl/bundle.hpp"
#include "mcdl/common.hpp"
#include "mcdl/ingest.hpp"
#include "mcdl/mcdm.hpp"
#include "mcdl/pipeline.hpp"

namespace mcdl {

struct StreamRecord {
  std::uint64_t sequence_id = 0;
  double timestamp = 0.0;
  Vector features;
};

/// Last-W records with running per-feature sums for O(1) mean and population
/// standard deviation. Sums are kept relative to an anchor (shifted data) and
/// re-anchored from the buffer once per W updates to bound rounding drift.
class SlidingWindow {
 public:
  SlidingWindow(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), anchor_(dim, 0.0), sum_(dim, 0.0), sumsq_(dim, 0.0) {
    if (capacity_ < 1) throw InputError("sliding window: capacity must be at least 1");
    if (dim_ < 1) throw InputError("sliding window: dimension must be at least 1");
  }

  void update(const StreamRecord& record) {
    if (record.features.size() != dim_) {
      throw InputError("sliding window: record dimension " + std::to_string(record.features.size()) +
                       " does not match window dimension " + std::to_string(dim_));
    }
    if (last_seq_ && record.sequence_id <= *last_seq_) {
      throw InputError("sliding window: sequence id " + std::to_string(record.sequence_id) +
                       " is not greater than " + std::to_string(*last_seq_));
    }
    last_seq_ = record.sequence_id;
    if (buffer_.empty()) anchor_ = record.features;
    if (buffer_.size() == capacity_) {
      const auto& old = buffer_.front();
      for (std::size_t f = 0; f < dim_; ++f) {
        const double s = old[f] - anchor_[f];
        sum_[f] -= s;
        sumsq_[f] -= s * s;
        churn_[f] += std::abs(s);
        churn_sq_[f] += s * s;
      }
      buffer_.pop_front();
    }
    for (std::size_t f = 0; f < dim_; ++f) {
      const double s = record.features[f] - anchor_[f];
      sum_[f] += s;
      sumsq_[f] += s * s;
      churn_[f] += std::abs(s);
      churn_sq_[f] += s * s;
    }
    buffer_.push_back(record.features);
    if (++since_anchor_ >= capacity_ || cancelling()) reanchor();
  }

  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  bool full() const { return buffer_.size() == capacity_; }
  const std::deque<Vector>& buffer() const { return buffer_; }

  double mean(std::size_t f) const { return anchor_[f] + sum_[f] / n(); }

  double delta(std::size_t f) const {
    const double m = sum_[f] / n();
    const double var = sumsq_[f] / n() - m * m;
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }

  bool constant(std::size_t f) const { return delta(f) == 0.0; }

  /// Current statistics in the form the normalizer consumes.
  NormParams stats() const {
    if (buffer_.empty()) throw InputError("sliding window: no records yet");
    NormParams p;
    for (std::size_t f = 0; f < dim_; ++f) {
      p.mean.push_back(mean(f));
      p.delta.push_back(delta(f));
      p.constant.push_back(p.delta.back() == 0.0);
    }
    return p;
  }

 private:
  double n() const { return static_cast<double>(buffer_.size()); }

  // Accumulated magnitude far above the current sums means rounding from departed records dominates.
  bool cancelling() const {
    constexpr double ratio = 1e3;
    for (std::size_t f = 0; f < dim_; ++f) {
      const double scale = n() * (1.0 + delta(f));
      const double drift = sum_[f] / n();
      if (drift * drift > ratio * (sumsq_[f] / n() - drift * drift + 1.0)) return true;
      if (churn_sq_[f] > ratio * (sumsq_[f] + n()) || churn_[f] > ratio * (std::abs(sum_[f]) + scale)) return true;
    }
    return false;
  }

  void reanchor() {
    since_anchor_ = 0;
    for (std::size_t f = 0; f < dim_; ++f) {
      double m = 0.0;
      for (const auto& r : buffer_) m += r[f];
      anchor_[f] = m / n();
      double s = 0.0, sq = 0.0, a = 0.0;
      for (const auto& r : buffer_) {
        const double c = r[f] - anchor_[f];
        s += c;
        sq += c * c;
        a += std::abs(c);
      }
      sum_[f] = s;
      sumsq_[f] = sq;
      churn_[f] = a;
      churn_sq_[f] = sq;
    }
  }

  std::size_t capacity_;
  std::size_t dim_;
  std::deque<Vector> buffer_;
  Vector anchor_;
  Vector sum_;
  Vector sumsq_;
  Vector churn_ = Vector(dim_, 0.0);
  Vector churn_sq_ = Vector(dim_, 0.0);
  std::size_t since_anchor_ = 0;
  std::optional<std::uint64_t> last_seq_;
};

/// Immutable batch-layer output the speed layer scores against.
struct ModelSnapshot {
  std::uint64_t version = 0;
  TrainedPipeline pipeline;
  /// Agents built from the training rows' decision values.
  AgentGraph reference;
  std::string checksum;

  /// Recomputes the content digest (version, pipeline and reference graph).
  std::string compute_checksum() const {
    std::string body = std::to_string(version) + "\n" + bundle_manifest(bundle_files(pipeline));
    for (const auto& a : reference.agents()) {
      body += std::to_string(a.id) + ":" + format_double(a.b);
      for (int j : a.neighbors) body += "," + std::to_string(j);
      body += "\n";
    }
    return sha256_hex(body);
  }
};

/// Holder of the live snapshot. Readers take a shared_ptr with an atomic
/// load and keep it for as long as they need; publication is an atomic swap.
class SnapshotStore {
 public:
  std::shared_ptr<const ModelSnapshot> current() const { return std::atomic_load(&current_); }

  std::uint64_t reserve_version() { return ++issued_; }

  /// Publishes `snap` unless a newer version is already live.
  void publish(std::shared_ptr<const ModelSnapshot> snap) {
    std::lock_guard lock(publish_mutex_);
    const auto live = std::atomic_load(&current_);
    if (live && live->version >= snap->version) return;
    std::atomic_store(&current_, std::move(snap));
  }

 private:
  std::shared_ptr<const ModelSnapshot> current_;
  std::atomic<std::uint64_t> issued_{0};
  std::mutex publish_mutex_;
};

/// Builds a snapshot privately, then publishes it.
inline std::shared_ptr<const ModelSnapshot> batch_layer_run(const Dataset& accumulated, const PipelineConfig& cfg,
                                                            SnapshotStore& store) {
  if (accumulated.size() < cfg.cluster.min_leaf_size) {
    throw InputError("batch layer: " + std::to_string(accumulated.size()) + " rows is below min_leaf_size " +
                     std::to_string(cfg.cluster.min_leaf_size));
  }
  auto snap = std::make_shared<ModelSnapshot>();
  snap->pipeline = train_pipeline(accumulated, cfg);
  snap->reference = agent_graph_for(snap->pipeline, accumulated.rows);
  snap->version = store.reserve_version();
  snap->checksum = snap->compute_checksum();
  std::shared_ptr<const ModelSnapshot> frozen = std::move(snap);
  store.publish(frozen);
  return frozen;
}

/// Snapshot for an already trained pipeline, e.g. one read from a bundle.
inline std::shared_ptr<const ModelSnapshot> snapshot_from_pipeline(TrainedPipeline pipeline, const Matrix& reference_rows,
                                                                   SnapshotStore& store) {
  auto snap = std::make_shared<ModelSnapshot>();
  snap->pipeline = std::move(pipeline);
  snap->reference = agent_graph_for(snap->pipeline, reference_rows);
  snap->version = store.reserve_version();
  snap->checksum = snap->compute_checksum();
  std::shared_ptr<const ModelSnapshot> frozen = std::move(snap);
  store.publish(frozen);
  return frozen;
}

struct StageTiming {
  std::int64_t processing_ns = 0;
  std::int64_t mcdm_ns = 0;
};

struct SpeedScore {
  double decision_value = 0.0;
  std::size_t leaf = 0;
  int agent_id = 0;
  double score = 0.0;
  /// Agents whose overall benefit moved because of this record.
  std::vector<ScoreChange> ranking_delta;
  StageTiming timing;
};

/// One speed-layer worker: owns its window and ranker, shares the snapshot.
class SpeedLayer {
 public:
  SpeedLayer(std::shared_ptr<const ModelSnapshot> snapshot, std::size_t window, std::size_t warmup)
      : snapshot_(std::move(snapshot)),
        window_(window, snapshot_ ? snapshot_->pipeline.dim() : 1),
        warmup_(warmup),
        ranker_(snapshot_ ? snapshot_->reference : AgentGraph(), snapshot_ ? snapshot_->pipeline.config.mcdm.weighting : Weighting::plain,
                snapshot_ ? snapshot_->pipeline.config.mcdm.neighborhood_k : 1) {
    if (!snapshot_) throw InputError("speed layer: no snapshot has been published");
    if (warmup_ < 1 || warmup_ > window) throw InputError("speed layer: warmup must lie in [1, window]");
  }

  SpeedLayer(const SnapshotStore& store, std::size_t window, std::size_t warmup)
      : SpeedLayer(store.current(), window, warmup) {}

  bool warm() const { return window_.size() >= warmup_; }
  const SlidingWindow& window() const { return window_; }
  const IncrementalRanker& ranker() const { return ranker_; }
  const ModelSnapshot& snapshot() const { return *snapshot_; }

  /// Feeds the window without scoring.
  void observe(const StreamRecord& record) { window_.update(record); }

  /// Window update, normalize, route, forward (processing); then benefit
  /// and affected-agent re-rank (MCDM). Throws on a cold window; the record
  /// is still added to the window.
  SpeedScore score(const StreamRecord& record) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    window_.update(record);
    if (!warm()) {
      throw InputError("speed layer: cold window (" + std::to_string(window_.size()) + " of " +
                       std::to_string(warmup_) + " warm-up records)");
    }
    const auto& p = snapshot_->pipeline;
    const Vector z = window_.stats().apply(record.features);
    SpeedScore out;
    out.leaf = assign_leaf(p.tree, z);
    const double prediction = p.target.inverse(0, forward(p.leaf_models[out.leaf], z)[0]);
    out.decision_value = p.decision_value_of(prediction);
    const auto t1 = clock::now();
    auto inserted = ranker_.insert({out.decision_value});
    const auto t2 = clock::now();
    out.agent_id = inserted.id;
    out.score = inserted.score;
    out.ranking_delta = std::move(inserted.changes);
    out.timing.processing_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
    out.timing.mcdm_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count();
    return out;
  }

 private:
  std::shared_ptr<const ModelSnapshot> snapshot_;
  SlidingWindow window_;
  std::size_t warmup_;
  IncrementalRanker ranker_;
};

// ---------------------------------------------------------------------------
// Synthetic replay and stream files

/// Drift-free Gaussian mixture over the snapshot's leaves: a leaf is drawn
/// in proportion to its training size, then a point around its centroid
/// with the leaf's own spread, mapped back to raw feature space.
inline std::vector<StreamRecord> synthetic_stream(const TrainedPipeline& p, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto& tree = p.tree;
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t l = 0; l < tree.leaf_count(); ++l) {
    total += static_cast<double>(tree.leaf(l).size);
    cumulative.push_back(total);
  }
  std::vector<StreamRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto leaf = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()),
        tree.leaf_count() - 1);
    const auto& node = tree.leaf(leaf);
    const double sigma = std::sqrt(node.quality / static_cast<double>(tree.dim));
    Vector z(tree.dim);
    for (std::size_t f = 0; f < tree.dim; ++f) z[f] = node.centroid[f] + sigma * rng.normal();
    out.push_back({i + 1, static_cast<double>(i + 1) * 1e-3, p.features.invert(z)});
  }
  return out;
}

inline void write_stream_csv(std::ostream& out, const std::vector<StreamRecord>& records,
                             const std::vector<std::string>& feature_names) {
  out << "sequence_id,timestamp";
  for (const auto& n : feature_names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << r.sequence_id << ',' << format_double(r.timestamp);
    for (double v : r.features) out << ',' << format_double(v);
    out << '\n';
  }
}

/// Reads `sequence_id,timestamp,<features...>`; ids and timestamps must be
/// strictly and weakly increasing respectively.
inline std::vector<StreamRecord> read_stream_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::blank(line)) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.size() < 3 || detail::trim(header[0]) != "sequence_id" || detail::trim(header[1]) != "timestamp") {
    throw InputError(source + ": stream header must start with sequence_id,timestamp and name at least one feature");
  }
  std::vector<StreamRecord> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::blank(line)) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw InputError(source + ": ragged stream row " + std::to_string(row));
    StreamRecord r;
    double seq = 0.0;
    if (!parse_double(cells[0], seq) || seq < 0 || seq != std::floor(seq)) {
      throw InputError(source + ": row " + std::to_string(row) + ": bad sequence_id '" + cells[0] + "'");
    }
    r.sequence_id = static_cast<std::uint64_t>(seq);
    if (!parse_double(cells[1], r.timestamp) || !std::isfinite(r.timestamp)) {
      throw InputError(source + ": row " + std::to_string(row) + ": bad timestamp '" + cells[1] + "'");
    }
    for (std::size_t c = 2; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw InputError(source + ": row " + std::to_string(row) + " column '" + header[c] + "': not a finite number");
      }
      r.features.push_back(v);
    }
    if (!out.empty() && (r.sequence_id <= out.back().sequence_id || r.timestamp < out.back().timestamp)) {
      throw InputError(source + ": row " + std::to_string(row) + ": sequence ids and timestamps must increase");
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw InputError(source + ": stream has no records");
  return out;
}

// ---------------------------------------------------------------------------
// Latency experiment

struct LatencyReport {
  std::size_t workers = 0;
  std::size_t records = 0;        // scored records per repetition
  double p50_us = 0.0;
  double p95_us = 0.0;
  double p99_us = 0.0;
  double processing_us = 0.0;     // mean per record
  double mcdm_us = 0.0;           // mean per record
  double overhead_pct = 0.0;      // mcdm share of total stage time
  /// Wall-clock time per scored record (throughput-normalized), median over repetitions.
  double wall_us_per_record = 0.0;
  std::vector<double> repetition_wall_us;
};

struct LatencyConfig {
  std::vector<std::size_t> workers{1, 2, 4, 8};
  std::size_t repetitions = 5;
  std::size_t window = 1024;
  std::size_t warmup = 64;
};

/// Single-consumer queue the workers hand their timing chunks to.
class SampleQueue {
 public:
  void push(std::vector<StageTiming> chunk) {
    {
      std::lock_guard lock(mutex_);
      chunks_.push_back(std::move(chunk));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_one();
  }
  /// Blocks until a chunk arrives; returns false once closed and drained.
  bool pop(std::vector<StageTiming>& chunk) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return closed_ || !chunks_.empty(); });
    if (chunks_.empty()) return false;
    chunk = std::move(chunks_.front());
    chunks_.pop_front();
    return true;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::vector<StageTiming>> chunks_;
  bool closed_ = false;
};

namespace detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

}  // namespace detail

/// Replays `records` at each worker count. Workers take contiguous shards,
/// each with a private scorer from `make_scorer()`; the first `warmup`
/// records of a shard only prime the scorer. The scorer interface is
/// `observe(record)` and `StageTiming timed(record)`.
template <class MakeScorer>
std::vector<LatencyReport> run_latency_experiment(const std::vector<StreamRecord>& records, const LatencyConfig& cfg,
                                                  MakeScorer make_scorer) {
  if (cfg.repetitions < 1) throw ConfigError("latency experiment: repetitions must be at least 1");
  std::vector<LatencyReport> reports;
  for (std::size_t workers : cfg.workers) {
    if (workers < 1) throw ConfigError("latency experiment: worker count must be at least 1");
    if (records.size() < workers * (cfg.warmup + 1)) {
      throw InputError("latency experiment: " + std::to_string(records.size()) + " records cannot feed " +
                       std::to_string(workers) + " warm workers");
    }
    struct Rep {
      std::vector<StageTiming> samples;
      double wall_us = 0.0;
    };
    std::vector<Rep> reps;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
      using clock = std::chrono::steady_clock;
      std::vector<decltype(make_scorer())> scorers;
      std::vector<std::pair<std::size_t, std::size_t>> shards;
      const std::size_t per = records.size() / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * per;
        const std::size_t end = w + 1 == workers ? records.size() : begin + per;
        shards.emplace_back(begin, end);
        scorers.push_back(make_scorer());
        for (std::size_t i = begin; i < begin + cfg.warmup; ++i) scorers.back().observe(records[i]);
      }

      SampleQueue queue;
      Rep result;
      std::thread reporter([&] {
        std::vector<StageTiming> chunk;
        while (queue.pop(chunk)) result.samples.insert(result.samples.end(), chunk.begin(), chunk.end());
      });
      std::atomic<std::size_t> ready{0};
      std::atomic<bool> go{false};
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
          auto& scorer = scorers[w];
          const auto [begin, end] = shards[w];
          std::vector<StageTiming> chunk;
          chunk.reserve(512);
          ready.fetch_add(1);
          while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
          for (std::size_t i = begin + cfg.warmup; i < end; ++i) {
            chunk.push_back(scorer.timed(records[i]));
            if (chunk.size() == 512) {
              queue.push(std::move(chunk));
              chunk = {};
              chunk.reserve(512);
            }
          }
          if (!chunk.empty()) queue.push(std::move(chunk));
        });
      }
      while (ready.load() < workers) std::this_thread::yield();
      const auto t0 = clock::now();
      go.store(true, std::memory_order_release);
      for (auto& t : threads) t.join();
      const auto t1 = clock::now();
      queue.close();
      reporter.join();
      result.wall_us = std::chrono::duration<double, std::micro>(t1 - t0).count();
      reps.push_back(std::move(result));
    }

    std::vector<double> per_record;
    for (const auto& r : reps) per_record.push_back(r.wall_us / static_cast<double>(r.samples.size()));
    const double med = detail::median(per_record);
    // Percentile detail comes from the repetition closest to the median.
    std::size_t pick = 0;
    for (std::size_t i = 1; i < reps.size(); ++i) {
      if (std::abs(per_record[i] - med) < std::abs(per_record[pick] - med)) pick = i;
    }
    const auto& chosen = reps[pick].samples;
    std::vector<double> totals;
    totals.reserve(chosen.size());
    double proc = 0.0, mcdm = 0.0;
    for (const auto& s : chosen) {
      totals.push_back(static_cast<double>(s.processing_ns + s.mcdm_ns) / 1000.0);
      proc += static_cast<double>(s.processing_ns) / 1000.0;
      mcdm += static_cast<double>(s.mcdm_ns) / 1000.0;
    }
    LatencyReport r;
    r.workers = workers;
    r.records = chosen.size();
    r.p50_us = detail::percentile(totals, 0.50);
    r.p95_us = detail::percentile(totals, 0.95);
    r.p99_us = detail::percentile(totals, 0.99);
    r.processing_us = proc / static_cast<double>(chosen.size());
    r.mcdm_us = mcdm / static_cast<double>(chosen.size());
    r.overhead_pct = proc + mcdm > 0.0 ? 100.0 * mcdm / (proc + mcdm) : 0.0;
    r.wall_us_per_record = med;
    r.repetition_wall_us = per_record;
    reports.push_back(std::move(r));
  }
  return reports;
}

/// Adapts a SpeedLayer to the experiment's scorer interface.
class SpeedLayerScorer {
 public:
  SpeedLayerScorer(std::shared_ptr<const ModelSnapshot> snap, std::size_t window, std::size_t warmup)
      : layer_(std::move(snap), window, warmup) {}
  void observe(const StreamRecord& r) { layer_.observe(r); }
  StageTiming timed(const StreamRecord& r) { return layer_.score(r).timing; }

 private:
  SpeedLayer layer_;
};

inline std::vector<LatencyReport> run_latency_experiment(std::shared_ptr<const ModelSnapshot> snapshot,
                                                         const std::vector<StreamRecord>& records,
                                                         const LatencyConfig& cfg) {
  if (!snapshot) throw InputError("latency experiment: no snapshot has been published");
  return run_latency_experiment(records, cfg, [&] { return SpeedLayerScorer(snapshot, cfg.window, cfg.warmup); });
}

/// Overhead figure reported alongside measurements for comparison only.
inline constexpr double kReferenceOverheadPct = 4.9;

inline void write_latency_csv(std::ostream& out, const std::vector<LatencyReport>& reports) {
  out << "workers,p50_us,p95_us,p99_us,overhead_pct,wall_us_per_record,records\n";
  for (const auto& r : reports) {
    out << r.workers << ',' << format_double(r.p50_us) << ',' << format_double(r.p95_us) << ','
        << format_double(r.p99_us) << ',' << format_double(r.overhead_pct) << ',' << format_double(r.wall_us_per_record)
        << ',' << r.records << '\n';
  }
}

inline nlohmann::json latency_json(const std::vector<LatencyReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    rows.push_back({{"workers", r.workers},
                    {"records", r.records},
                    {"p50_us", r.p50_us},
                    {"p95_us", r.p95_us},
                    {"p99_us", r.p99_us},
                    {"processing_us", r.processing_us},
                    {"mcdm_us", r.mcdm_us},
                    {"overhead_pct", r.overhead_pct},
                    {"wall_us_per_record", r.wall_us_per_record},
                    {"repetition_wall_us_per_record", r.repetition_wall_us}});
  }
  return {{"reports", std::move(rows)},
          {"paper_reference_overhead_pct", kReferenceOverheadPct},
          {"measurement_fields",
           {"p50_us", "p95_us", "p99_us", "processing_us", "mcdm_us", "overhead_pct", "wall_us_per_record",
            "repetition_wall_us_per_record"}}};
}

}  // namespace mcdl
