#pragma once

// Small fully connected network with a softmax head, hand-written reverse
// mode, templated on the scalar type so gradient checks can run in extended
// precision.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/logrank_loss.hpp"
#include "survlr/types.hpp"

namespace survlr {

// Identity leaves stacked hidden layers as a factorized linear map.
enum class Activation { Rectifier, Tanh, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
    default: return "rectifier";
  }
}

inline Activation parse_activation(const std::string& name) {
  if (name == "rectifier" || name == "relu") return Activation::Rectifier;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw Error(ErrorKind::InvalidInput, "unknown activation '" + name + "'");
}

struct NetworkSpec {
  std::vector<int> layer_sizes;  // input, hidden..., k
  Activation hidden_activation = Activation::Rectifier;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(layer_sizes.size() >= 2, ErrorKind::InvalidSpec,
                    "network needs an input size and at least one layer");
    for (int s : layer_sizes)
      detail::require(s > 0, ErrorKind::InvalidSpec, "layer sizes must be positive");
    detail::require(layer_sizes.back() >= 2, ErrorKind::InvalidSpec, "output size k must be >= 2");
  }

  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  std::size_t layers() const { return layer_sizes.size() - 1; }
};

template <class T = double>
struct NetworkParams {
  std::vector<Matrix<T>> weights;  // layer l: out x in
  std::vector<Vector<T>> biases;

  Eigen::Index size() const {
    Eigen::Index total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
    return total;
  }

  /// Layer by layer: weights (column-major), then biases.
  Vector<T> flatten() const {
    Vector<T> flat(size());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      flat.segment(at, weights[l].size()) = weights[l].reshaped();
      at += weights[l].size();
      flat.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    return flat;
  }

  void assign(const Vector<T>& flat) {
    detail::require(flat.size() == size(), ErrorKind::InvalidInput, "parameter vector size mismatch");
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l].reshaped() = flat.segment(at, weights[l].size());
      at += weights[l].size();
      biases[l] = flat.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }

  template <class U>
  NetworkParams<U> cast() const {
    NetworkParams<U> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(weights[l].template cast<U>());
      out.biases.push_back(biases[l].template cast<U>());
    }
    return out;
  }
};

template <class T = double>
struct Network {
  NetworkSpec spec;
  NetworkParams<T> params;

  template <class U>
  Network<U> cast() const {
    return Network<U>{spec, params.template cast<U>()};
  }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, seeded by spec.seed.
inline Network<double> make_network(const NetworkSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Network<double> net{spec, {}};
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixD w(out, in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    VectorD b(out);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = dist(rng);
    net.params.weights.push_back(std::move(w));
    net.params.biases.push_back(std::move(b));
  }
  return net;
}

/// Zero-initialized parameters with the shapes implied by `spec`.
template <class T = double>
Network<T> zero_network(const NetworkSpec& spec) {
  spec.validate();
  Network<T> net{spec, {}};
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    net.params.weights.push_back(Matrix<T>::Zero(spec.layer_sizes[l + 1], spec.layer_sizes[l]));
    net.params.biases.push_back(Vector<T>::Zero(spec.layer_sizes[l + 1]));
  }
  return net;
}

template <class T>
struct ForwardCache {
  std::vector<Matrix<T>> inputs;  // input to layer l (n x in_l)
  std::vector<Matrix<T>> pre;     // pre-activation of layer l (n x out_l)
  Matrix<T> probs;
};

namespace detail {

template <class T>
Matrix<T> activate(const Matrix<T>& x, Activation a) {
  if (a == Activation::Tanh) return x.array().tanh().matrix();
  if (a == Activation::Identity) return x;
  return x.cwiseMax(T(0));
}

template <class T>
Matrix<T> activation_derivative(const Matrix<T>& pre, Activation a) {
  if (a == Activation::Tanh) return (T(1) - pre.array().tanh().square()).matrix();
  if (a == Activation::Identity) return Matrix<T>::Ones(pre.rows(), pre.cols());
  return (pre.array() > T(0)).template cast<T>().matrix();
}

template <class T>
void check_features(const Network<T>& net, const Matrix<T>& features) {
  require(features.cols() == net.spec.inputs(), ErrorKind::InvalidInput,
          "feature width " + std::to_string(features.cols()) + " does not match network input " +
              std::to_string(net.spec.inputs()));
  require(features.rows() > 0, ErrorKind::InvalidInput, "no feature rows");
}

}  // namespace detail

/// Logits for each row of `features` (n x m). Fills `cache` for backward().
template <class T>
Matrix<T> network_logits(const Network<T>& net, const Matrix<T>& features,
                         ForwardCache<T>* cache = nullptr) {
  detail::check_features(net, features);
  Matrix<T> h = features;
  const std::size_t layers = net.params.weights.size();
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix<T> z = h * net.params.weights[l].transpose();
    z.rowwise() += net.params.biases[l].transpose();
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(z);
    }
    h = (l + 1 == layers) ? std::move(z) : detail::activate(z, net.spec.hidden_activation);
  }
  return h;
}

template <class T>
SoftAssignment<T> forward(const Network<T>& net, const Matrix<T>& features) {
  return SoftAssignment<T>::from_logits(network_logits(net, features));
}

/// Parameter gradients given d objective / d logits.
template <class T>
NetworkParams<T> backward(const Network<T>& net, const ForwardCache<T>& cache,
                          const Matrix<T>& grad_logits) {
  const std::size_t layers = net.params.weights.size();
  NetworkParams<T> grads;
  grads.weights.resize(layers);
  grads.biases.resize(layers);
  Matrix<T> delta = grad_logits;
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] = delta.transpose() * cache.inputs[l];
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix<T> upstream = delta * net.params.weights[l];
    delta = upstream.cwiseProduct(
        detail::activation_derivative(cache.pre[l - 1], net.spec.hidden_activation));
  }
  return grads;
}

/// Value of the training objective and its gradient w.r.t. every parameter.
template <class T>
struct ObjectiveGradient {
  LossValue<T> loss;
  NetworkParams<T> grads;  // d total / d theta
};

template <class T>
ObjectiveGradient<T> objective_gradient(const Network<T>& net, const Matrix<T>& features,
                                        std::span<const SurvivalRecord> records,
                                        const LossConfig& config) {
  ForwardCache<T> cache;
  const Matrix<T> logits = network_logits(net, features, &cache);
  const auto soft = SoftAssignment<T>::from_logits(logits);
  ObjectiveGradient<T> out;
  out.loss = total_objective(soft, records, config);
  out.grads = backward(net, cache, softmax_backward(soft.probs(), out.loss.grad_probs));
  return out;
}

/// Argmax per row; ties go to the lowest index.
template <class T>
std::vector<int> predict_labels(const Network<T>& net, const Matrix<T>& features) {
  const auto soft = forward(net, features);
  std::vector<int> labels(static_cast<std::size_t>(soft.rows()));
  for (Eigen::Index i = 0; i < soft.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < soft.groups(); ++g)
      if (soft.probs()(i, g) > soft.probs()(i, best)) best = g;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace survlr
