#pragma once

#include <cmath>

#include "survlr/types.hpp"

namespace survlr {

/// Adam with decoupled weight decay. Each step first shrinks the parameters
/// by (1 - lr * weight_decay), then applies the bias-corrected Adam update.
/// The gradient passed in is that of the quantity being minimized.
class AdamW {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
  };

  explicit AdamW(Eigen::Index size) : AdamW(size, Options{}) {}
  AdamW(Eigen::Index size, Options options)
      : options_(options), m_(VectorD::Zero(size)), v_(VectorD::Zero(size)) {}

  void step(VectorD& params, const VectorD& grad) {
    ++t_;
    const auto& o = options_;
    params *= 1.0 - o.learning_rate * o.weight_decay;
    m_ = o.beta1 * m_ + (1.0 - o.beta1) * grad;
    v_ = o.beta2 * v_ + (1.0 - o.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
    params.array() -= o.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + o.epsilon);
  }

  long steps() const { return t_; }
  const Options& options() const { return options_; }

 private:
  Options options_;
  VectorD m_;
  VectorD v_;
  long t_ = 0;
};

}  // namespace survlr
