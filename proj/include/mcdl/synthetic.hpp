#pragma once

#include <string>
#include <vector>

#include "mcdl/common.hpp"
#include "mcdl/ingest.hpp"

namespace mcdl::synthetic {

struct Blob {
  Vector center;
  double spread = 1.0;
  /// Target at the center; the target also varies linearly with position.
  double base = 0.0;
  std::string label;
};

/// Isotropic Gaussian blobs, `per_blob` rows each, emitted blob by blob.
/// target = base + slope * sum(x - center) + noise * N(0, 1).
inline Dataset blobs(const std::vector<Blob>& defs, std::size_t per_blob, std::uint64_t seed, double slope = 0.5,
                     double noise = 0.0) {
  Rng rng(seed);
  Dataset d;
  const std::size_t dim = defs.front().center.size();
  for (std::size_t f = 0; f < dim; ++f) d.feature_names.push_back("x" + std::to_string(f + 1));
  d.target_name = "target";
  const bool labelled = !defs.front().label.empty();
  if (labelled) {
    d.labels.emplace();
    d.label_name = "class";
  }
  for (const auto& b : defs) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      Vector x(dim);
      double offset = 0.0;
      for (std::size_t f = 0; f < dim; ++f) {
        const double e = b.spread * rng.normal();
        x[f] = b.center[f] + e;
        offset += e;
      }
      d.rows.push_back(std::move(x));
      d.targets.push_back(b.base + slope * offset + noise * rng.normal());
      if (labelled) d.labels->push_back(b.label);
    }
  }
  return d;
}

/// Four well-separated 2-D blobs on a square with ordered targets 0/10/20/30
/// and a binary label (high for the two upper targets).
inline std::vector<Blob> four_blobs() {
  return {{{0.0, 0.0}, 0.5, 0.0, "low"},
          {{20.0, 0.0}, 0.5, 10.0, "low"},
          {{0.0, 20.0}, 0.5, 20.0, "high"},
          {{20.0, 20.0}, 0.5, 30.0, "high"}};
}

/// y = x . w + 1 + noise, features uniform in [-5, 5].
inline Dataset linear(std::size_t n, std::size_t dim, std::uint64_t seed, double noise = 0.1) {
  Rng rng(seed);
  Dataset d;
  Vector w(dim);
  for (std::size_t f = 0; f < dim; ++f) {
    w[f] = static_cast<double>(f % 3) + 1.0;
    d.feature_names.push_back("x" + std::to_string(f + 1));
  }
  d.target_name = "target";
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(dim);
    double y = 1.0;
    for (std::size_t f = 0; f < dim; ++f) {
      x[f] = rng.uniform(-5.0, 5.0);
      y += w[f] * x[f];
    }
    d.rows.push_back(std::move(x));
    d.targets.push_back(y + noise * rng.normal());
  }
  return d;
}

/// Piecewise target over two features with a binary label split at y = 0.
inline Dataset piecewise(std::size_t n, std::uint64_t seed, double noise = 0.1) {
  Rng rng(seed);
  Dataset d;
  d.feature_names = {"x1", "x2"};
  d.target_name = "target";
  d.label_name = "class";
  d.labels.emplace();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-3.0, 3.0);
    const double b = rng.uniform(-3.0, 3.0);
    double y = a < 0.0 ? 2.0 * a + b : (b < 0.0 ? 5.0 - a : a * b);
    y += noise * rng.normal();
    d.rows.push_back({a, b});
    d.targets.push_back(y);
    d.labels->push_back(y > 0.0 ? "pos" : "neg");
  }
  return d;
}

}  // namespace mcdl::synthetic
