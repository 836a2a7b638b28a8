#pragma once

// Differentiable multivariate logrank objective on soft group memberships.
//
// With membership probabilities p_ig the observed events and at-risk masses
// become sums of probabilities over the event set D(t_j) and the risk set
// R(t_j). Expected events, the hypergeometric covariance V and the quadratic
// form Z^T V^{-1} Z are then ordinary smooth functions of p, and the backward
// pass below differentiates all of them, including V.
//
// Sign convention: total = statistic - penalty_weight * penalty is a quantity
// to MAXIMIZE. Training descends on -total.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/survival.hpp"
#include "survlr/types.hpp"

namespace survlr {

/// n x k row-stochastic matrix of group membership probabilities.
template <class T = double>
class SoftAssignment {
 public:
  SoftAssignment() = default;

  static SoftAssignment from_probs(Matrix<T> probs, double tolerance = 1e-7) {
    detail::require(probs.rows() > 0 && probs.cols() >= 1, ErrorKind::InvalidInput,
                    "empty assignment matrix");
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      for (Eigen::Index g = 0; g < probs.cols(); ++g) {
        const T v = probs(i, g);
        detail::require(v >= T(0) && v <= T(1), ErrorKind::InvalidInput,
                        "assignment probabilities must lie in [0, 1]");
      }
      using std::abs;
      detail::require(abs(probs.row(i).sum() - T(1)) <= T(tolerance), ErrorKind::InvalidInput,
                      "assignment rows must sum to 1");
    }
    SoftAssignment out;
    out.probs_ = std::move(probs);
    return out;
  }

  /// Row-wise softmax of logits.
  static SoftAssignment from_logits(const Matrix<T>& logits) {
    detail::require(logits.rows() > 0 && logits.cols() >= 1, ErrorKind::InvalidInput,
                    "empty logit matrix");
    SoftAssignment out;
    out.probs_.resize(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const T top = logits.row(i).maxCoeff();
      out.probs_.row(i) = (logits.row(i).array() - top).exp().matrix();
      out.probs_.row(i) /= out.probs_.row(i).sum();
    }
    return out;
  }

  static SoftAssignment one_hot(std::span<const int> labels, int k) {
    Matrix<T> probs = Matrix<T>::Zero(static_cast<Eigen::Index>(labels.size()), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      detail::require(labels[i] >= 0 && labels[i] < k, ErrorKind::InvalidInput,
                      "label outside [0, k)");
      probs(static_cast<Eigen::Index>(i), labels[i]) = T(1);
    }
    return from_probs(std::move(probs));
  }

  const Matrix<T>& probs() const { return probs_; }
  Eigen::Index rows() const { return probs_.rows(); }
  Eigen::Index groups() const { return probs_.cols(); }

  Vector<T> class_means() const { return probs_.colwise().mean().transpose(); }

 private:
  Matrix<T> probs_;
};

struct LossConfig {
  double penalty_weight = 0.1;
  double prob_floor = 1e-4;
  double variance_ridge = 1e-8;

  void validate(Eigen::Index k) const {
    detail::require(penalty_weight >= 0.0, ErrorKind::InvalidInput, "penalty weight must be >= 0");
    detail::require(variance_ridge >= 0.0, ErrorKind::InvalidInput, "variance ridge must be >= 0");
    detail::require(prob_floor > 0.0 && prob_floor < 1.0 / static_cast<double>(k),
                    ErrorKind::InvalidInput, "prob_floor must lie in (0, 1/k)");
  }
};

template <class T = double>
struct LossValue {
  T statistic = T(0);
  T penalty = T(0);
  T total = T(0);
  Matrix<T> grad_probs;  // d total / d p
};

namespace detail {

/// Index of the last event time <= each subject's time, plus one. A subject
/// is at risk at rows [0, upto).
inline std::vector<Eigen::Index> risk_extent(std::span<const SurvivalRecord> records,
                                             const std::vector<double>& event_times) {
  std::vector<Eigen::Index> upto(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto it = std::upper_bound(event_times.begin(), event_times.end(), records[i].time);
    upto[i] = static_cast<Eigen::Index>(it - event_times.begin());
  }
  return upto;
}

template <class T>
void check_alignment(const SoftAssignment<T>& soft, std::span<const SurvivalRecord> records) {
  validate_records(records);
  require(static_cast<std::size_t>(soft.rows()) == records.size(), ErrorKind::InvalidInput,
          "assignment rows do not match the number of records");
}

template <class T>
EventTable<T> partial_table(const Matrix<T>& probs, std::span<const SurvivalRecord> records,
                            const std::vector<double>& event_times,
                            const std::vector<Eigen::Index>& upto) {
  const auto rows = static_cast<Eigen::Index>(event_times.size());
  const Eigen::Index k = probs.cols();
  EventTable<T> table;
  table.times = event_times;
  table.per_group_events = Matrix<T>::Zero(rows, k);
  table.events_total = Vector<T>::Zero(rows);
  table.at_risk_total = Vector<T>::Zero(rows);

  // bucket[u] collects subjects whose risk extent is exactly u
  Matrix<T> bucket = Matrix<T>::Zero(rows + 1, k);
  std::vector<double> bucket_count(static_cast<std::size_t>(rows) + 1, 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    bucket.row(upto[i]) += probs.row(ii);
    bucket_count[static_cast<std::size_t>(upto[i])] += 1.0;
    if (records[i].event) {
      table.per_group_events.row(upto[i] - 1) += probs.row(ii);
      table.events_total(upto[i] - 1) += T(1);
    }
  }
  table.per_group_at_risk = Matrix<T>::Zero(rows, k);
  Vector<T> running = Vector<T>::Zero(k);
  double running_count = 0.0;
  for (Eigen::Index j = rows - 1; j >= 0; --j) {
    running += bucket.row(j + 1).transpose();
    running_count += bucket_count[static_cast<std::size_t>(j + 1)];
    table.per_group_at_risk.row(j) = running.transpose();
    table.at_risk_total(j) = T(running_count);
  }
  return table;
}

/// Statistic and the padded solution w = [V_r^{-1} Z_r, 0] of the reduced form.
template <class T>
struct ReducedForm {
  T statistic = T(0);
  Vector<T> w;
};

template <class T>
ReducedForm<T> reduced_form(const EventTable<T>& table, T ridge) {
  const Eigen::Index k = table.groups();
  Vector<T> z = Vector<T>::Zero(k);
  Matrix<T> v = Matrix<T>::Zero(k, k);
  for (std::size_t j = 0; j < table.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const T d = table.events_total(jj);
    const T n = table.at_risk_total(jj);
    const auto risk = table.per_group_at_risk.row(jj).transpose();
    z += table.per_group_events.row(jj).transpose() - risk * (d / n);
    const T c = hypergeometric_factor(d, n) / n;
    if (c == T(0)) continue;
    v.diagonal() += c * risk;
    v -= (c / n) * (risk * risk.transpose());
  }
  const Eigen::Index m = k - 1;
  Vector<T> solution;
  ReducedForm<T> out;
  out.statistic = spd_quadratic_form<T>(v.topLeftCorner(m, m), z.head(m), ridge, solution);
  out.w = Vector<T>::Zero(k);
  out.w.head(m) = solution;
  return out;
}

/// d statistic / d p given the reduced-form solution.
template <class T>
Matrix<T> statistic_gradient(const EventTable<T>& table, const Vector<T>& w,
                             std::span<const SurvivalRecord> records,
                             const std::vector<Eigen::Index>& upto) {
  const auto rows = static_cast<Eigen::Index>(table.size());
  const Eigen::Index k = table.groups();
  // prefix[u] = sum_{j < u} dL/dR_j
  Matrix<T> prefix = Matrix<T>::Zero(rows + 1, k);
  const Vector<T> w_sq = w.array().square().matrix();
  for (Eigen::Index j = 0; j < rows; ++j) {
    const T d = table.events_total(j);
    const T n = table.at_risk_total(j);
    const T c = hypergeometric_factor(d, n) / n;
    const T s = w.dot(table.per_group_at_risk.row(j).transpose());
    const Vector<T> grad_risk =
        -(T(2) * d / n) * w - c * (w_sq - (T(2) * s / n) * w);
    prefix.row(j + 1) = prefix.row(j) + grad_risk.transpose();
  }
  Matrix<T> grad(static_cast<Eigen::Index>(records.size()), k);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    grad.row(ii) = prefix.row(upto[i]);
    if (records[i].event) grad.row(ii) += T(2) * w.transpose();
  }
  return grad;
}

template <class T>
T clamp_mean(T m, double floor) {
  return std::clamp(m, T(floor), T(1.0 - floor));
}

}  // namespace detail

/// Soft event table: O_gj = sum_{i in D(t_j)} p_ig, R_g(t_j) = sum_{i in R(t_j)} p_ig.
/// Totals d_j and |R(t_j)| are subject counts.
template <class T>
EventTable<T> partial_event_table(const SoftAssignment<T>& soft,
                                  std::span<const SurvivalRecord> records) {
  detail::check_alignment(soft, records);
  detail::require(has_event(records), ErrorKind::NoEvents, "all records are censored");
  const auto times = detail::distinct_event_times(records);
  return detail::partial_table(soft.probs(), records, times, detail::risk_extent(records, times));
}

template <class T>
T partial_logrank_statistic(const SoftAssignment<T>& soft, std::span<const SurvivalRecord> records,
                            const LossConfig& config) {
  detail::require(soft.groups() >= 2, ErrorKind::InvalidInput, "need at least two groups");
  const auto table = partial_event_table(soft, records);
  return detail::reduced_form(table, T(config.variance_ridge)).statistic;
}

/// Exponent that maps the uniform share 1/k onto 1/2.
inline double penalty_exponent(Eigen::Index k) {
  return std::log(0.5) / std::log(1.0 / static_cast<double>(k));
}

/// Balance barrier on class-mean probabilities:
///   P = (1/k) sum_g 1 / (q_g - q_g^2) - 4,  q_g = mean_g^alpha.
/// Means are clamped to [floor, 1 - floor]. P is 0 exactly at uniform means.
template <class T>
T balance_penalty(const Vector<T>& means, double prob_floor = 1e-4) {
  const Eigen::Index k = means.size();
  detail::require(k >= 2, ErrorKind::InvalidInput, "penalty needs k >= 2");
  const T alpha = T(penalty_exponent(k));
  T sum = T(0);
  for (Eigen::Index g = 0; g < k; ++g) {
    using std::pow;
    const T q = pow(detail::clamp_mean(means(g), prob_floor), alpha);
    sum += T(1) / (q - q * q);
  }
  return sum / T(k) - T(4);
}

/// dP / d mean_g; zero where the clamp is active.
template <class T>
Vector<T> balance_penalty_gradient(const Vector<T>& means, double prob_floor = 1e-4) {
  const Eigen::Index k = means.size();
  const T alpha = T(penalty_exponent(k));
  Vector<T> grad = Vector<T>::Zero(k);
  for (Eigen::Index g = 0; g < k; ++g) {
    if (means(g) < T(prob_floor) || means(g) > T(1.0 - prob_floor)) continue;
    using std::pow;
    const T q = pow(means(g), alpha);
    const T denom = q - q * q;
    const T dq = alpha * pow(means(g), alpha - T(1));
    grad(g) = -(T(1) - T(2) * q) / (denom * denom) * dq / T(k);
  }
  return grad;
}

/// Statistic, penalty, total and d total / d p. A batch without events has no
/// logrank information; everything is 0 for it.
template <class T>
LossValue<T> total_objective(const SoftAssignment<T>& soft, std::span<const SurvivalRecord> records,
                             const LossConfig& config) {
  detail::check_alignment(soft, records);
  const Eigen::Index k = soft.groups();
  detail::require(k >= 2, ErrorKind::InvalidInput, "need at least two groups");
  config.validate(k);

  LossValue<T> out;
  out.grad_probs = Matrix<T>::Zero(soft.rows(), k);
  if (!has_event(records)) return out;

  const auto times = detail::distinct_event_times(records);
  const auto upto = detail::risk_extent(records, times);
  const auto table = detail::partial_table(soft.probs(), records, times, upto);
  const auto form = detail::reduced_form(table, T(config.variance_ridge));

  const Vector<T> means = soft.class_means();
  out.statistic = form.statistic;
  out.penalty = balance_penalty(means, config.prob_floor);
  out.total = out.statistic - T(config.penalty_weight) * out.penalty;

  out.grad_probs = detail::statistic_gradient(table, form.w, records, upto);
  const Vector<T> dmean = balance_penalty_gradient(means, config.prob_floor);
  const T scale = T(config.penalty_weight) / T(soft.rows());
  out.grad_probs.rowwise() -= (scale * dmean).transpose();
  return out;
}

/// Chain a gradient w.r.t. probabilities through the row-wise softmax.
template <class T>
Matrix<T> softmax_backward(const Matrix<T>& probs, const Matrix<T>& grad_probs) {
  const Vector<T> inner = (probs.array() * grad_probs.array()).rowwise().sum().matrix();
  return (probs.array() * (grad_probs.colwise() - inner).array()).matrix();
}

/// d total / d logits for softmax(logits) memberships.
template <class T>
Matrix<T> gradient_wrt_logits(const Matrix<T>& logits, std::span<const SurvivalRecord> records,
                              const LossConfig& config) {
  const auto soft = SoftAssignment<T>::from_logits(logits);
  const auto value = total_objective(soft, records, config);
  return softmax_backward(soft.probs(), value.grad_probs);
}

}  // namespace survlr
