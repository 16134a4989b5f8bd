#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mcdl/common.hpp"
#include "mcdl/ingest.hpp"

namespace mcdl {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Dense affine layer; `weights` is row-major with shape out x in.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  Vector weights;
  Vector bias;

  double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
  double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

  static Layer zeros(std::size_t in, std::size_t out) {
    return Layer{in, out, Vector(in * out, 0.0), Vector(out, 0.0)};
  }
};

/// Feed-forward regressor: sigmoid on every hidden layer, linear output layer.
struct Mlp {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// `widths` lists every layer width including input and output, e.g.
  /// {d, 16, 8, 1}. Parameters are drawn uniformly from +-1/sqrt(fan_in).
  static Mlp create(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("network needs at least an input and an output width");
    for (auto w : widths) {
      if (w == 0) throw ConfigError("network layer widths must be positive");
    }
    Rng rng(seed);
    Mlp m;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Layer layer = Layer::zeros(widths[l], widths[l + 1]);
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      for (auto& v : layer.weights) v = rng.uniform(-bound, bound);
      for (auto& v : layer.bias) v = rng.uniform(-bound, bound);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  /// Same topology with every parameter zero.
  Mlp zeros_like() const {
    Mlp m;
    for (const auto& l : layers) m.layers.push_back(Layer::zeros(l.in, l.out));
    return m;
  }

  void validate() const {
    if (layers.empty()) throw InputError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
        throw InputError("layer " + std::to_string(l) + " parameter arrays do not match its shape");
      }
      if (l > 0 && layers[l - 1].out != layer.in) {
        throw InputError("layer " + std::to_string(l) + " input width does not chain with the previous layer");
      }
      if (!all_finite(layer.weights) || !all_finite(layer.bias)) {
        throw InputError("layer " + std::to_string(l) + " has non-finite parameters");
      }
    }
  }

  bool operator==(const Mlp& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& a = layers[l];
      const auto& b = other.layers[l];
      if (a.in != b.in || a.out != b.out || a.weights != b.weights || a.bias != b.bias) return false;
    }
    return true;
  }
};

/// Activations of every layer for one input; `activations[0]` is the input.
using Trace = std::vector<Vector>;

inline Trace forward_trace(const Mlp& model, std::span<const double> input) {
  if (input.size() != model.input_dim()) {
    throw InputError("forward: input dimension " + std::to_string(input.size()) + " does not match network input " +
                     std::to_string(model.input_dim()));
  }
  Trace acts;
  acts.reserve(model.layers.size() + 1);
  acts.emplace_back(input.begin(), input.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const auto& a = acts.back();
    Vector z(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double s = layer.bias[o];
      const double* row = &layer.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) s += row[i] * a[i];
      z[o] = s;
    }
    const bool hidden = l + 1 < model.layers.size();
    if (hidden) {
      for (auto& v : z) v = sigmoid(v);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

inline Vector forward(const Mlp& model, std::span<const double> input) {
  return std::move(forward_trace(model, input).back());
}

/// Mean squared error averaged over samples and outputs.
inline double mse(const Mlp& model, const Matrix& inputs, const Matrix& targets) {
  if (inputs.empty()) throw InputError("mse: empty batch");
  double s = 0.0;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const auto y = forward(model, inputs[b]);
    for (std::size_t o = 0; o < y.size(); ++o) {
      const double r = y[o] - targets[b][o];
      s += r * r;
    }
  }
  return s / static_cast<double>(inputs.size() * model.output_dim());
}

namespace detail {

inline void check_batch(const Mlp& model, const Matrix& inputs, const Matrix& targets) {
  if (inputs.empty()) throw InputError("empty batch");
  if (inputs.size() != targets.size()) throw InputError("batch inputs and targets differ in length");
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    if (inputs[b].size() != model.input_dim()) {
      throw InputError("batch row " + std::to_string(b) + " has input dimension " + std::to_string(inputs[b].size()) +
                       ", network expects " + std::to_string(model.input_dim()));
    }
    if (targets[b].size() != model.output_dim()) {
      throw InputError("batch row " + std::to_string(b) + " has target dimension " +
                       std::to_string(targets[b].size()) + ", network emits " + std::to_string(model.output_dim()));
    }
  }
}

/// Adds d(loss)/d(params) for one sample, with the loss scale folded into `scale`.
inline void backprop_into(const Mlp& model, std::span<const double> input, std::span<const double> target,
                          double scale, Mlp& grad) {
  const Trace acts = forward_trace(model, input);
  const std::size_t L = model.layers.size();
  // delta = d(loss)/d(pre-activation) of the current layer.
  Vector delta(model.output_dim());
  for (std::size_t o = 0; o < delta.size(); ++o) delta[o] = 2.0 * scale * (acts[L][o] - target[o]);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = model.layers[l];
    auto& g = grad.layers[l];
    const auto& a_in = acts[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      g.bias[o] += delta[o];
      double* row = &g.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) row[i] += delta[o] * a_in[i];
    }
    if (l == 0) break;
    Vector prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = &layer.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) prev[i] += row[i] * delta[o];
    }
    // Input of layer l is a sigmoid output: s' = s (1 - s).
    for (std::size_t i = 0; i < layer.in; ++i) prev[i] *= a_in[i] * (1.0 - a_in[i]);
    delta = std::move(prev);
  }
}

}  // namespace detail

/// Exact gradient of `mse` over the batch, by backpropagation. The result has
/// the same shape as `model`.
inline Mlp gradient(const Mlp& model, const Matrix& inputs, const Matrix& targets) {
  detail::check_batch(model, inputs, targets);
  Mlp grad = model.zeros_like();
  const double scale = 1.0 / static_cast<double>(inputs.size() * model.output_dim());
  for (std::size_t b = 0; b < inputs.size(); ++b) detail::backprop_into(model, inputs[b], targets[b], scale, grad);
  return grad;
}

struct TrainHyper {
  double lr = 0.1;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainReport {
  Vector epoch_losses;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
};

/// Seeded mini-batch gradient descent on mean squared error. Each epoch
/// shuffles the rows, takes one step per batch and records the full-data MSE.
inline std::pair<Mlp, TrainReport> train(Mlp model, const Matrix& inputs, const Matrix& targets,
                                         const TrainHyper& hyper) {
  if (!(hyper.lr >= 0.0)) throw ConfigError("train: learning rate must be non-negative");
  if (hyper.epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (hyper.batch_size < 1) throw ConfigError("train: batch size must be at least 1");
  detail::check_batch(model, inputs, targets);

  const std::size_t n = inputs.size();
  const double initial = mse(model, inputs, targets);
  const double limit = 1e6 * std::max(initial, 1e-12);
  Rng rng(hyper.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainReport report;
  Mlp grad = model.zeros_like();
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += hyper.batch_size) {
      const std::size_t end = std::min(n, start + hyper.batch_size);
      for (auto& g : grad.layers) {
        std::fill(g.weights.begin(), g.weights.end(), 0.0);
        std::fill(g.bias.begin(), g.bias.end(), 0.0);
      }
      const double scale = 1.0 / static_cast<double>((end - start) * model.output_dim());
      for (std::size_t p = start; p < end; ++p) {
        detail::backprop_into(model, inputs[order[p]], targets[order[p]], scale, grad);
      }
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const auto& g = grad.layers[l];
        for (std::size_t k = 0; k < layer.weights.size(); ++k) layer.weights[k] -= hyper.lr * g.weights[k];
        for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= hyper.lr * g.bias[k];
      }
    }
    const double loss = mse(model, inputs, targets);
    report.epoch_losses.push_back(loss);
    if (!std::isfinite(loss) || loss > limit) {
      throw ComputationError("train: diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                             format_double(loss) + ", initial " + format_double(initial) + ")");
    }
  }
  report.epochs_run = report.epoch_losses.size();
  report.final_loss = report.epoch_losses.back();
  return {std::move(model), std::move(report)};
}

/// Single-output convenience overload.
inline std::pair<Mlp, TrainReport> train(Mlp model, const Matrix& inputs, std::span<const double> targets,
                                         const TrainHyper& hyper) {
  Matrix t;
  t.reserve(targets.size());
  for (double v : targets) t.push_back({v});
  return train(std::move(model), inputs, t, hyper);
}

/// (x - mean) / delta. Applied to a model output in target space.
inline double decision_value(double x, double mean, double delta) {
  if (!(delta > 0.0)) throw InputError("decision_value: constant output (delta = " + format_double(delta) + ")");
  return (x - mean) / delta;
}

inline double decision_value(double x, const NormParams& params, std::size_t k) {
  return decision_value(x, params.mean.at(k), params.delta.at(k));
}

inline void to_json(nlohmann::json& j, const Mlp& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  }
  j = nlohmann::json{{"hidden_activation", "sigmoid"}, {"output_activation", "linear"}, {"layers", std::move(layers)}};
}

inline void from_json(const nlohmann::json& j, Mlp& m) {
  m.layers.clear();
  for (const auto& jl : j.at("layers")) {
    Layer l;
    jl.at("in").get_to(l.in);
    jl.at("out").get_to(l.out);
    jl.at("weights").get_to(l.weights);
    jl.at("bias").get_to(l.bias);
    m.layers.push_back(std::move(l));
  }
  m.validate();
}

}  // namespace mcdl
