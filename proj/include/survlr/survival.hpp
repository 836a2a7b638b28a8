#pragma once

// Classical right-censored survival statistics: event tables, Kaplan-Meier,
// the k-sample logrank test and Harrell's concordance index.
//
// Tie convention everywhere: at a shared time, events happen before
// censoring, so a subject censored at t_j is still at risk at t_j.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/special.hpp"
#include "survlr/types.hpp"

namespace survlr {

struct SurvivalRecord {
  double time = 0.0;
  bool event = false;
};

/// Per distinct event time: events and at-risk mass, in total and per group.
/// Masses are reals so that the same table serves hard and soft memberships.
template <class T = double>
struct EventTable {
  std::vector<double> times;
  Vector<T> events_total;
  Vector<T> at_risk_total;
  Matrix<T> per_group_events;   // rows = event times, cols = groups
  Matrix<T> per_group_at_risk;  // rows = event times, cols = groups

  std::size_t size() const { return times.size(); }
  Eigen::Index groups() const { return per_group_events.cols(); }

  T expected(std::size_t j, Eigen::Index g) const {
    const auto jj = static_cast<Eigen::Index>(j);
    return per_group_at_risk(jj, g) * events_total(jj) / at_risk_total(jj);
  }
};

struct StepSurvivalCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<double> ci_lower;
  std::vector<double> ci_upper;
  std::vector<double> at_risk;
  std::vector<double> events;

  /// Right-continuous step value at time t (1 before the first event time).
  double at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  /// Smallest time with S(t) <= 0.5, or +inf when the curve never gets there.
  double median() const {
    for (std::size_t j = 0; j < times.size(); ++j)
      if (survival[j] <= 0.5) return times[j];
    return std::numeric_limits<double>::infinity();
  }
};

struct LogrankResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 0;
  VectorD observed;
  VectorD expected;
};

inline void validate_records(std::span<const SurvivalRecord> records) {
  detail::require(!records.empty(), ErrorKind::InvalidInput, "no survival records");
  for (const auto& r : records)
    detail::require(std::isfinite(r.time) && r.time >= 0.0, ErrorKind::InvalidInput,
                    "survival times must be finite and non-negative");
}

inline bool has_event(std::span<const SurvivalRecord> records) {
  return std::any_of(records.begin(), records.end(), [](const auto& r) { return r.event; });
}

namespace detail {

/// Sorted distinct times at which at least one event was observed.
inline std::vector<double> distinct_event_times(std::span<const SurvivalRecord> records) {
  std::vector<double> times;
  for (const auto& r : records)
    if (r.event) times.push_back(r.time);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

/// z^T V^{-1} z via Cholesky, after adding `ridge` to the diagonal. Fills
/// `solution` with V^{-1} z. Pivots below 1e-12 of the largest diagonal
/// entry are treated as singular.
template <class T>
T spd_quadratic_form(Matrix<T> v, const Vector<T>& z, T ridge, Vector<T>& solution) {
  v.diagonal().array() += ridge;
  const T scale = v.diagonal().cwiseAbs().maxCoeff();
  Eigen::LLT<Matrix<T>> llt(v);
  bool ok = llt.info() == Eigen::Success && scale > T(0);
  if (ok) {
    const Matrix<T> l = llt.matrixL();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
      if (!(l(i, i) * l(i, i) > T(1e-12) * scale)) ok = false;
  }
  if (!ok) throw Error(ErrorKind::SingularVariance, "variance matrix of group scores is singular");
  solution = llt.solve(z);
  return z.dot(solution);
}

/// Hypergeometric variance factor d (N - d) / (N - 1), defined as 0 at N = 1.
template <class T>
T hypergeometric_factor(T d, T n) {
  if (n <= T(1)) return T(0);
  return d * (n - d) / (n - T(1));
}

}  // namespace detail

/// Hard-label event table. Labels must lie in [0, k).
inline EventTable<double> build_event_table(std::span<const SurvivalRecord> records,
                                            std::span<const int> labels, int k) {
  validate_records(records);
  detail::require(labels.size() == records.size(), ErrorKind::InvalidInput,
                  "labels and records differ in length");
  detail::require(k >= 1, ErrorKind::InvalidInput, "k must be positive");
  for (int g : labels)
    detail::require(g >= 0 && g < k, ErrorKind::InvalidInput, "label outside [0, k)");
  detail::require(has_event(records), ErrorKind::NoEvents, "all records are censored");

  EventTable<double> table;
  table.times = detail::distinct_event_times(records);
  const auto rows = static_cast<Eigen::Index>(table.times.size());
  table.events_total = VectorD::Zero(rows);
  table.at_risk_total = VectorD::Zero(rows);
  table.per_group_events = MatrixD::Zero(rows, k);
  table.per_group_at_risk = MatrixD::Zero(rows, k);

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    // rows with t_j <= time are those where subject i is at risk
    const auto last = std::upper_bound(table.times.begin(), table.times.end(), r.time);
    const auto upto = static_cast<Eigen::Index>(last - table.times.begin());
    for (Eigen::Index j = 0; j < upto; ++j) table.per_group_at_risk(j, labels[i]) += 1.0;
    if (r.event) table.per_group_events(upto - 1, labels[i]) += 1.0;
  }
  table.events_total = table.per_group_events.rowwise().sum();
  table.at_risk_total = table.per_group_at_risk.rowwise().sum();
  return table;
}

inline EventTable<double> build_event_table(std::span<const SurvivalRecord> records,
                                            std::span<const int> labels) {
  detail::require(!labels.empty(), ErrorKind::InvalidInput, "no labels");
  return build_event_table(records, labels, *std::max_element(labels.begin(), labels.end()) + 1);
}

/// Product-limit estimate with a 95% interval from Greenwood's variance of
/// log S, clipped to [0, 1].
inline StepSurvivalCurve kaplan_meier(std::span<const SurvivalRecord> records) {
  const std::vector<int> single(records.size(), 0);
  const auto table = build_event_table(records, single, 1);
  constexpr double z = 1.959963984540054;

  StepSurvivalCurve curve;
  double s = 1.0;
  double greenwood = 0.0;
  for (std::size_t j = 0; j < table.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double d = table.events_total(jj);
    const double n = table.at_risk_total(jj);
    s *= 1.0 - d / n;
    curve.times.push_back(table.times[j]);
    curve.survival.push_back(s);
    curve.at_risk.push_back(n);
    curve.events.push_back(d);
    if (s <= 0.0) {
      curve.ci_lower.push_back(0.0);
      curve.ci_upper.push_back(0.0);
      continue;
    }
    greenwood += d / (n * (n - d));
    const double half = z * std::sqrt(greenwood);
    curve.ci_lower.push_back(std::clamp(s * std::exp(-half), 0.0, 1.0));
    curve.ci_upper.push_back(std::clamp(s * std::exp(half), 0.0, 1.0));
  }
  return curve;
}

/// k-sample logrank test. The statistic uses the leading (k-1) components of
/// Z and V, which equals the generalized-inverse form because sum_g Z_g = 0.
inline LogrankResult multivariate_logrank_hard(std::span<const SurvivalRecord> records,
                                               std::span<const int> labels, int k) {
  detail::require(k >= 2, ErrorKind::InvalidInput, "logrank test needs k >= 2");
  const auto table = build_event_table(records, labels, k);

  VectorD observed = VectorD::Zero(k);
  VectorD expected = VectorD::Zero(k);
  MatrixD v = MatrixD::Zero(k, k);
  for (std::size_t j = 0; j < table.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double d = table.events_total(jj);
    const double n = table.at_risk_total(jj);
    const double factor = detail::hypergeometric_factor(d, n) / n;
    for (int g = 0; g < k; ++g) {
      const double share = table.per_group_at_risk(jj, g);
      observed(g) += table.per_group_events(jj, g);
      expected(g) += share * d / n;
      for (int h = 0; h < k; ++h) {
        const double other = table.per_group_at_risk(jj, h);
        v(g, h) += factor * ((g == h ? share : 0.0) - share * other / n);
      }
    }
  }

  const int m = k - 1;
  const VectorD z = (observed - expected).head(m);
  VectorD w;
  LogrankResult out;
  out.statistic = std::max(0.0, detail::spd_quadratic_form<double>(v.topLeftCorner(m, m), z, 0.0, w));
  out.degrees_of_freedom = m;
  out.p_value = chi2_sf(out.statistic, m);
  out.observed = std::move(observed);
  out.expected = std::move(expected);
  return out;
}

/// Harrell's C. A higher score means predicted shorter survival. Comparable
/// pairs: the earlier time is an event, or equal times where only one is an
/// event (that one is taken as earlier). Score ties count 1/2.
inline double concordance_index(std::span<const double> risk_scores,
                                std::span<const SurvivalRecord> records) {
  validate_records(records);
  detail::require(risk_scores.size() == records.size(), ErrorKind::InvalidInput,
                  "scores and records differ in length");
  double concordant = 0.0;
  double comparable = 0.0;
  const std::size_t n = records.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!records[i].event) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool earlier = records[i].time < records[j].time ||
                           (records[i].time == records[j].time && !records[j].event);
      if (!earlier) continue;
      comparable += 1.0;
      if (risk_scores[i] > risk_scores[j])
        concordant += 1.0;
      else if (risk_scores[i] == risk_scores[j])
        concordant += 0.5;
    }
  }
  detail::require(comparable > 0.0, ErrorKind::UndefinedMetric, "no comparable pairs for c-index");
  return concordant / comparable;
}

}  // namespace survlr
