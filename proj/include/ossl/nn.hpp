#pragma once

// Dense layers, activations, block log-softmax, manual backpropagation and
// heavy-ball SGD. Everything is float64 and single-threaded.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ossl/errors.hpp"
#include "ossl/rng.hpp"

namespace ossl {

// Four independent partial sums; the summation order is fixed so results are
// reproducible bit for bit.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  return dot(a.data(), b.data(), a.size());
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> biases;

  static DenseLayer zeros(std::size_t in, std::size_t out) {
    return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)};
  }

  // Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and biases.
  static DenseLayer uniform_init(std::size_t in, std::size_t out, Rng& rng) {
    DenseLayer l = zeros(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : l.weights) w = rng.uniform(-bound, bound);
    for (double& b : l.biases) b = rng.uniform(-bound, bound);
    return l;
  }

  double& weight(std::size_t o, std::size_t i) { return weights[o * in + i]; }
  double weight(std::size_t o, std::size_t i) const { return weights[o * in + i]; }
  std::size_t parameter_count() const { return weights.size() + biases.size(); }
  bool operator==(const DenseLayer&) const = default;
};

inline void affine_forward(const DenseLayer& layer, std::span<const double> input,
                           std::span<double> output) {
  require(input.size() == layer.in, "affine_forward: input dimension mismatch");
  require(output.size() == layer.out, "affine_forward: output dimension mismatch");
  for (std::size_t o = 0; o < layer.out; ++o)
    output[o] = dot(&layer.weights[o * layer.in], input.data(), layer.in) + layer.biases[o];
}

inline std::vector<double> affine_forward(const DenseLayer& layer, std::span<const double> input) {
  std::vector<double> out(layer.out);
  affine_forward(layer, input, out);
  return out;
}

enum class Activation { identity, relu, tanh };

inline void activate(Activation kind, std::span<double> values) {
  switch (kind) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh:
      for (double& v : values) v = std::tanh(v);
      break;
  }
}

// Log-softmax over consecutive blocks, with per-block max subtraction.
inline void log_softmax_blocks(std::span<const double> input,
                               std::span<const std::size_t> block_sizes,
                               std::span<double> output) {
  require(input.size() == output.size(), "log_softmax_blocks: output size mismatch");
  std::size_t total = 0;
  for (std::size_t b : block_sizes) total += b;
  require(total == input.size(), "log_softmax_blocks: block sizes do not sum to input length");
  std::size_t offset = 0;
  for (std::size_t n : block_sizes) {
    require(n > 0, "log_softmax_blocks: empty block");
    const auto block = input.subspan(offset, n);
    const double m = *std::max_element(block.begin(), block.end());
    double sum = 0.0;
    for (double v : block) sum += std::exp(v - m);
    // Shift first so large logits keep their low-order bits.
    const double log_sum = std::log(sum);
    for (std::size_t j = 0; j < n; ++j) output[offset + j] = (block[j] - m) - log_sum;
    offset += n;
  }
}

enum class ActivationKind { relu, tanh, log_softmax_blocks };

inline std::vector<double> activation_apply(ActivationKind kind, std::span<const double> input,
                                            std::span<const std::size_t> block_sizes = {}) {
  std::vector<double> out(input.begin(), input.end());
  switch (kind) {
    case ActivationKind::relu: activate(Activation::relu, out); break;
    case ActivationKind::tanh: activate(Activation::tanh, out); break;
    case ActivationKind::log_softmax_blocks: log_softmax_blocks(input, block_sizes, out); break;
  }
  return out;
}

// A stack of affine layers, each followed by its activation.
struct Mlp {
  std::vector<DenseLayer> layers;
  std::vector<Activation> activations;
  std::uint64_t version = 0;  // bumped by every parameter update

  // sizes = {input, hidden..., output}
  static Mlp create(std::span<const std::size_t> sizes, Activation hidden, Activation output,
                    Rng& rng) {
    require(sizes.size() >= 2, "Mlp::create: need at least input and output sizes");
    Mlp m;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      require(sizes[l] > 0 && sizes[l + 1] > 0, "Mlp::create: zero layer width");
      m.layers.push_back(DenseLayer::uniform_init(sizes[l], sizes[l + 1], rng));
      m.activations.push_back(l + 2 == sizes.size() ? output : hidden);
    }
    return m;
  }

  std::size_t input_size() const { return layers.front().in; }
  std::size_t output_size() const { return layers.back().out; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameter_count();
    return n;
  }
  bool same_parameters(const Mlp& other) const {
    return layers == other.layers && activations == other.activations;
  }
};

// Forward intermediates: values[0] is the input, values[l + 1] the
// post-activation output of layer l.
struct MlpCache {
  const Mlp* owner = nullptr;
  std::uint64_t version = 0;
  std::vector<std::vector<double>> values;

  std::span<const double> output() const { return values.back(); }
};

inline std::span<const double> mlp_forward(const Mlp& net, std::span<const double> input,
                                           MlpCache& cache) {
  require(input.size() == net.input_size(), "mlp_forward: input dimension mismatch");
  cache.values.resize(net.layers.size() + 1);
  cache.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    cache.values[l + 1].resize(net.layers[l].out);
    affine_forward(net.layers[l], cache.values[l], cache.values[l + 1]);
    activate(net.activations[l], cache.values[l + 1]);
  }
  cache.owner = &net;
  cache.version = net.version;
  return cache.values.back();
}

struct MlpGradients {
  std::vector<DenseLayer> layers;

  static MlpGradients like(const Mlp& net) {
    MlpGradients g;
    for (const auto& l : net.layers) g.layers.push_back(DenseLayer::zeros(l.in, l.out));
    return g;
  }
};

// Gradients of <upstream, output> with respect to every parameter (written,
// not accumulated) and, if `input_grad` is non-empty, the input.
inline void mlp_backward(const Mlp& net, const MlpCache& cache, std::span<const double> upstream,
                         MlpGradients& grads, std::span<double> input_grad,
                         std::vector<double>& scratch) {
  require(cache.owner == &net && cache.version == net.version &&
              cache.values.size() == net.layers.size() + 1,
          "mlp_backward: stale or foreign forward cache");
  require(upstream.size() == net.output_size(), "mlp_backward: upstream dimension mismatch");
  if (grads.layers.size() != net.layers.size()) grads = MlpGradients::like(net);

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    const auto& post = cache.values[l + 1];
    const auto& prev = cache.values[l];
    switch (net.activations[l]) {
      case Activation::identity: break;
      case Activation::relu:
        for (std::size_t o = 0; o < layer.out; ++o)
          if (post[o] <= 0.0) delta[o] = 0.0;
        break;
      case Activation::tanh:
        for (std::size_t o = 0; o < layer.out; ++o) delta[o] *= 1.0 - post[o] * post[o];
        break;
    }
    DenseLayer& g = grads.layers[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      double* row = &g.weights[o * layer.in];
      const double d = delta[o];
      for (std::size_t i = 0; i < layer.in; ++i) row[i] = d * prev[i];
      g.biases[o] = d;
    }
    const bool need_input = l > 0 || !input_grad.empty();
    if (!need_input) break;
    scratch.assign(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* row = &layer.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) scratch[i] += d * row[i];
    }
    if (l == 0) {
      require(input_grad.size() == layer.in, "mlp_backward: input_grad dimension mismatch");
      std::copy(scratch.begin(), scratch.end(), input_grad.begin());
    } else {
      delta.swap(scratch);
    }
  }
}

inline void mlp_backward(const Mlp& net, const MlpCache& cache, std::span<const double> upstream,
                         MlpGradients& grads, std::span<double> input_grad = {}) {
  std::vector<double> scratch;
  mlp_backward(net, cache, upstream, grads, input_grad, scratch);
}

// Flat views over an MLP's tensors, in layer order: weights, biases, ...
inline std::vector<std::span<double>> parameter_views(std::vector<DenseLayer>& layers) {
  std::vector<std::span<double>> views;
  for (auto& l : layers) {
    views.emplace_back(l.weights);
    views.emplace_back(l.biases);
  }
  return views;
}

inline bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter tensor
  std::uint64_t skipped_steps = 0;            // updates dropped for non-finite gradients

  OptimizerState() = default;
  OptimizerState(double lr, double mom) : learning_rate(lr), momentum(mom) { validate(); }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("optimizer: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("optimizer: momentum must lie in [0, 1)");
  }

  // Zero velocity buffers mirroring the given tensors.
  void attach(std::span<const std::span<double>> params) {
    velocity.clear();
    for (const auto& p : params) velocity.emplace_back(p.size(), 0.0);
  }

  bool operator==(const OptimizerState&) const = default;
};

// Heavy-ball update on one tensor: v <- momentum * v + g; p <- p - lr * v.
inline void momentum_update(std::span<double> param, std::span<double> velocity,
                            std::span<const double> grad, double lr, double momentum) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i];
    param[i] -= lr * velocity[i];
  }
}

// Applies one heavy-ball step to every tensor. Returns false, and leaves the
// parameters untouched, when any gradient entry is non-finite.
inline bool sgd_momentum_step(std::span<const std::span<double>> params,
                              std::span<const std::span<const double>> grads,
                              OptimizerState& state) {
  require(params.size() == grads.size(), "sgd_momentum_step: tensor count mismatch");
  if (state.velocity.empty()) state.attach(params);
  require(state.velocity.size() == params.size(), "sgd_momentum_step: velocity count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require(params[t].size() == grads[t].size() && params[t].size() == state.velocity[t].size(),
            "sgd_momentum_step: tensor shape mismatch");
  }
  for (const auto& g : grads) {
    if (!all_finite(g)) {
      ++state.skipped_steps;
      return false;
    }
  }
  for (std::size_t t = 0; t < params.size(); ++t)
    momentum_update(params[t], state.velocity[t], grads[t], state.learning_rate, state.momentum);
  return true;
}

}  // namespace ossl
