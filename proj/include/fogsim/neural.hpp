#pragma once

// Small dense feed-forward networks with exact backpropagation, masked
// softmax, and the Adam optimizer. Enough machinery for the actor and critic;
// nothing more general.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fogsim/errors.hpp"
#include "fogsim/scenario.hpp"  // format_double / parse_double

namespace fogsim::nn {

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;   // out

  double& w(int o, int i) { return weights[static_cast<std::size_t>(o * in + i)]; }
  double w(int o, int i) const { return weights[static_cast<std::size_t>(o * in + i)]; }
};

/// Gradient buffers shaped like a DenseNet.
struct GradientTape {
  std::vector<std::vector<double>> d_weights;
  std::vector<std::vector<double>> d_biases;

  void zero() {
    for (auto& v : d_weights) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : d_biases) std::fill(v.begin(), v.end(), 0.0);
  }
  void scale(double s) {
    for (auto& v : d_weights)
      for (auto& g : v) g *= s;
    for (auto& v : d_biases)
      for (auto& g : v) g *= s;
  }
  void add(const GradientTape& other) {
    if (other.d_weights.size() != d_weights.size()) throw ShapeError("tape layer count differs");
    for (std::size_t l = 0; l < d_weights.size(); ++l) {
      if (other.d_weights[l].size() != d_weights[l].size() ||
          other.d_biases[l].size() != d_biases[l].size())
        throw ShapeError("tape layer shape differs");
      for (std::size_t k = 0; k < d_weights[l].size(); ++k) d_weights[l][k] += other.d_weights[l][k];
      for (std::size_t k = 0; k < d_biases[l].size(); ++k) d_biases[l][k] += other.d_biases[l][k];
    }
  }
  bool all_zero() const {
    for (const auto& v : d_weights)
      for (double g : v)
        if (g != 0.0) return false;
    for (const auto& v : d_biases)
      for (double g : v)
        if (g != 0.0) return false;
    return true;
  }
  friend bool operator==(const GradientTape&, const GradientTape&) = default;
};

/// Activations of one forward pass, kept for backward().
struct ForwardCache {
  std::vector<std::vector<double>> activations;  // [0] = input, [L] = output
};

/// Fully connected net: rectifier on hidden layers, linear output layer.
class DenseNet {
 public:
  DenseNet() = default;

  /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  DenseNet(std::vector<int> sizes, std::mt19937_64& rng) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("a net needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      DenseLayer layer;
      layer.in = sizes_[l];
      layer.out = sizes_[l + 1];
      if (layer.in < 1 || layer.out < 1) throw ShapeError("layer sizes must be positive");
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      layer.weights.resize(static_cast<std::size_t>(layer.in * layer.out));
      for (auto& v : layer.weights) v = dist(rng);
      layer.biases.assign(static_cast<std::size_t>(layer.out), 0.0);
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.biases.size();
    return n;
  }

  std::vector<double> forward(std::span<const double> input) const {
    ForwardCache cache;
    return forward(input, cache);
  }

  std::vector<double> forward(std::span<const double> input, ForwardCache& cache) const {
    if (static_cast<int>(input.size()) != input_size())
      throw ShapeError("input length " + std::to_string(input.size()) + " != " +
                       std::to_string(input_size()));
    cache.activations.resize(layers_.size() + 1);
    cache.activations[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DenseLayer& layer = layers_[l];
      const auto& a = cache.activations[l];
      auto& z = cache.activations[l + 1];
      z.assign(static_cast<std::size_t>(layer.out), 0.0);
      const bool hidden = l + 1 < layers_.size();
      for (int o = 0; o < layer.out; ++o) {
        const double* row = &layer.weights[static_cast<std::size_t>(o * layer.in)];
        double s = layer.biases[static_cast<std::size_t>(o)];
        for (int i = 0; i < layer.in; ++i) s += row[i] * a[static_cast<std::size_t>(i)];
        z[static_cast<std::size_t>(o)] = hidden ? std::max(0.0, s) : s;
      }
    }
    return cache.activations.back();
  }

  GradientTape make_tape() const {
    GradientTape tape;
    for (const auto& l : layers_) {
      tape.d_weights.emplace_back(l.weights.size(), 0.0);
      tape.d_biases.emplace_back(l.biases.size(), 0.0);
    }
    return tape;
  }

  bool matches(const GradientTape& tape) const {
    if (tape.d_weights.size() != layers_.size() || tape.d_biases.size() != layers_.size())
      return false;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (tape.d_weights[l].size() != layers_[l].weights.size() ||
          tape.d_biases[l].size() != layers_[l].biases.size())
        return false;
    return true;
  }

  /// Accumulates into `tape` the parameter gradient of a scalar loss whose
  /// gradient with respect to the output is `output_gradient`.
  void backward(const ForwardCache& cache, std::span<const double> output_gradient,
                GradientTape& tape) const {
    if (static_cast<int>(output_gradient.size()) != output_size())
      throw ShapeError("output gradient has the wrong length");
    if (cache.activations.size() != layers_.size() + 1) throw ShapeError("forward cache missing");
    if (!matches(tape)) throw ShapeError("tape does not match the network");

    std::vector<double> delta(output_gradient.begin(), output_gradient.end());
    std::vector<double> prev;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const DenseLayer& layer = layers_[l];
      const auto& a = cache.activations[l];
      auto& dw = tape.d_weights[l];
      auto& db = tape.d_biases[l];
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        if (d == 0.0) continue;
        db[static_cast<std::size_t>(o)] += d;
        double* row = &dw[static_cast<std::size_t>(o * layer.in)];
        for (int i = 0; i < layer.in; ++i) row[i] += d * a[static_cast<std::size_t>(i)];
      }
      if (l == 0) break;
      prev.assign(static_cast<std::size_t>(layer.in), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        if (d == 0.0) continue;
        const double* row = &layer.weights[static_cast<std::size_t>(o * layer.in)];
        for (int i = 0; i < layer.in; ++i) prev[static_cast<std::size_t>(i)] += d * row[i];
      }
      // Rectifier derivative; activations[l] is post-activation of layer l-1.
      for (int i = 0; i < layer.in; ++i)
        if (!(a[static_cast<std::size_t>(i)] > 0.0)) prev[static_cast<std::size_t>(i)] = 0.0;
      delta.swap(prev);
    }
  }

  friend bool operator==(const DenseNet& a, const DenseNet& b) {
    if (a.sizes_ != b.sizes_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l)
      if (a.layers_[l].weights != b.layers_[l].weights || a.layers_[l].biases != b.layers_[l].biases)
        return false;
    return true;
  }

 private:
  std::vector<int> sizes_;
  std::vector<DenseLayer> layers_;
};

/// Softmax over the unmasked logits (mask[k] == true means allowed).
inline std::vector<double> softmax_logits_to_probs(std::span<const double> logits,
                                                   std::span<const bool> mask) {
  if (!mask.empty() && mask.size() != logits.size()) throw ShapeError("mask length differs");
  const auto allowed = [&](std::size_t k) { return mask.empty() || mask[k]; };
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (allowed(k)) hi = std::max(hi, logits[k]);
  if (hi == -std::numeric_limits<double>::infinity())
    throw EmptySupport("every category is masked");
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (allowed(k)) z += (p[k] = std::exp(logits[k] - hi));
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> softmax_logits_to_probs(std::span<const double> logits) {
  return softmax_logits_to_probs(logits, std::span<const bool>{});
}

struct AdamConfig {
  double step_size = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  GradientTape first_moment;
  GradientTape second_moment;
  std::int64_t step = 0;

  static AdamState for_net(const DenseNet& net) {
    return AdamState{net.make_tape(), net.make_tape(), 0};
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam descent step using the gradient in `tape`.
inline void adam_step(DenseNet& net, const GradientTape& tape, AdamState& state,
                      const AdamConfig& cfg) {
  if (!net.matches(tape) || !net.matches(state.first_moment) || !net.matches(state.second_moment))
    throw ShapeError("Adam buffers do not match the network");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      param[k] -= cfg.step_size * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, tape.d_weights[l], state.first_moment.d_weights[l],
           state.second_moment.d_weights[l]);
    update(layers[l].biases, tape.d_biases[l], state.first_moment.d_biases[l],
           state.second_moment.d_biases[l]);
  }
}

// ---------------------------------------------------------------------------
// Text serialization: "dense <n> <size_0> ... <size_{n-1}>" then one line of
// row-major weights followed by biases per layer. Numbers round-trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_values(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? " " : "") << format_double(v[k]);
}

inline void read_values(std::istream& is, std::vector<double>& v) {
  std::string tok;
  for (auto& x : v) {
    if (!(is >> tok)) throw FormatError("truncated parameter block");
    x = parse_double(tok);
  }
}

}  // namespace detail

inline void write_net(std::ostream& os, const DenseNet& net) {
  os << "dense " << net.sizes().size();
  for (int s : net.sizes()) os << ' ' << s;
  os << '\n';
  for (const auto& l : net.layers()) {
    detail::write_values(os, l.weights);
    os << ' ';
    detail::write_values(os, l.biases);
    os << '\n';
  }
}

inline void write_tape(std::ostream& os, const GradientTape& tape) {
  for (std::size_t l = 0; l < tape.d_weights.size(); ++l) {
    detail::write_values(os, tape.d_weights[l]);
    os << ' ';
    detail::write_values(os, tape.d_biases[l]);
    os << '\n';
  }
}

inline DenseNet read_net(std::istream& is) {
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "dense" || n < 2 || n > 64) throw FormatError("bad net header");
  std::vector<int> sizes(n);
  for (auto& s : sizes)
    if (!(is >> s) || s < 1) throw FormatError("bad layer size");
  std::mt19937_64 unused(0);
  DenseNet net(sizes, unused);
  for (auto& l : net.layers()) {
    detail::read_values(is, l.weights);
    detail::read_values(is, l.biases);
  }
  return net;
}

inline void read_tape(std::istream& is, GradientTape& tape) {
  for (std::size_t l = 0; l < tape.d_weights.size(); ++l) {
    detail::read_values(is, tape.d_weights[l]);
    detail::read_values(is, tape.d_biases[l]);
  }
}

}  // namespace fogsim::nn
