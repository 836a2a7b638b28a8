#pragma once

// Synthetic cohorts: Gaussian-mixture features, group-specific Weibull event
// times, exponential random censoring and a fixed administrative horizon.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/survival.hpp"
#include "survlr/types.hpp"

namespace survlr {

struct WeibullGroup {
  double shape = 1.0;  // rho
  double scale = 1.0;  // lambda

  void validate() const {
    detail::require(std::isfinite(shape) && shape > 0.0 && std::isfinite(scale) && scale > 0.0,
                    ErrorKind::InvalidSpec, "Weibull shape and scale must be finite and positive");
  }

  double cdf(double t) const { return t <= 0.0 ? 0.0 : -std::expm1(-std::pow(t / scale, shape)); }
  double median() const { return scale * std::pow(std::log(2.0), 1.0 / shape); }
};

/// Event-time groups of the synthetic experiments: high, intermediate and low risk.
inline std::array<WeibullGroup, 3> paper_weibull_groups() {
  return {WeibullGroup{0.539, 3068.812}, WeibullGroup{0.898, 5114.687}, WeibullGroup{1.257, 7160.562}};
}

/// Inverse-transform draw T = scale * (-ln(1 - u))^(1/shape).
inline double weibull_sample(const WeibullGroup& group, double u) {
  detail::require(u > 0.0 && u < 1.0, ErrorKind::InvalidInput, "u must lie in (0, 1)");
  return group.scale * std::pow(-std::log1p(-u), 1.0 / group.shape);
}

struct CohortGroup {
  WeibullGroup survival;
  VectorD mean;
  MatrixD covariance;
  double weight = 1.0;
};

struct CohortSpec {
  std::vector<CohortGroup> groups;
  double censor_scale = 10000.0;  // mean of the exponential censoring time
  double admin_horizon = 4000.0;
  int n = 0;
  std::uint64_t seed = 0;

  Eigen::Index features() const { return groups.empty() ? 0 : groups.front().mean.size(); }

  void validate() const {
    detail::require(n > 0, ErrorKind::InvalidSpec, "cohort size n must be positive");
    detail::require(!groups.empty(), ErrorKind::InvalidSpec, "cohort needs at least one group");
    detail::require(censor_scale > 0.0 && admin_horizon > 0.0, ErrorKind::InvalidSpec,
                    "censor scale and administrative horizon must be positive");
    double total = 0.0;
    for (const auto& g : groups) {
      g.survival.validate();
      detail::require(g.weight >= 0.0, ErrorKind::InvalidSpec, "group weights must be >= 0");
      detail::require(g.mean.size() == features() && g.covariance.rows() == features() &&
                          g.covariance.cols() == features(),
                      ErrorKind::InvalidSpec, "feature mean/covariance shapes disagree");
      total += g.weight;
    }
    detail::require(std::abs(total - 1.0) <= 1e-9, ErrorKind::InvalidSpec, "group weights must sum to 1");
  }
};

/// Three equally weighted groups with unit-covariance 3-D features whose means
/// sit on an equilateral triangle of side `separation` (scaled basis vectors).
inline CohortSpec paper_synthetic_spec(int n, std::uint64_t seed, double separation = 3.0) {
  CohortSpec spec;
  spec.n = n;
  spec.seed = seed;
  const auto weibull = paper_weibull_groups();
  for (int g = 0; g < 3; ++g) {
    CohortGroup group;
    group.survival = weibull[static_cast<std::size_t>(g)];
    group.mean = VectorD::Zero(3);
    group.mean(g) = separation / std::sqrt(2.0);
    group.covariance = MatrixD::Identity(3, 3);
    group.weight = 1.0 / 3.0;
    spec.groups.push_back(std::move(group));
  }
  return spec;
}

struct Cohort {
  MatrixD features;
  std::vector<SurvivalRecord> records;
  std::vector<int> truth;
};

namespace detail {

/// Uniform draw strictly inside (0, 1) from the top 53 bits.
inline double open_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Matrix A with A A^T = cov; throws for asymmetric or indefinite input.
inline MatrixD covariance_factor(const MatrixD& cov) {
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorKind::InvalidSpec,
          "covariance matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixD> eig(cov);
  require(eig.info() == Eigen::Success, ErrorKind::InvalidSpec, "covariance eigendecomposition failed");
  require(eig.eigenvalues().minCoeff() >= -1e-10 * scale, ErrorKind::InvalidSpec,
          "covariance matrix is not positive semi-definite");
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Observed time = min(event, censor, horizon); ties resolve to censored.
inline SurvivalRecord censor(double event_time, double censor_time, double horizon) {
  const double observed = std::min({event_time, censor_time, horizon});
  return {observed, event_time < censor_time && event_time < horizon};
}

}  // namespace detail

/// Event and censoring draws for subjects with known group labels. Consumes
/// two uniforms per subject, in subject order.
inline std::vector<SurvivalRecord> simulate_survival(std::span<const int> truth,
                                                     std::span<const WeibullGroup> groups,
                                                     double censor_scale, double admin_horizon,
                                                     std::mt19937_64& rng) {
  std::vector<SurvivalRecord> records;
  records.reserve(truth.size());
  for (int g : truth) {
    detail::require(g >= 0 && static_cast<std::size_t>(g) < groups.size(), ErrorKind::InvalidInput,
                    "group label without a survival law");
    const double event_time = weibull_sample(groups[static_cast<std::size_t>(g)], detail::open_unit(rng));
    const double u_censor = detail::open_unit(rng);
    const double censor_time = std::isinf(censor_scale) ? std::numeric_limits<double>::infinity()
                                                        : -censor_scale * std::log(u_censor);
    records.push_back(detail::censor(event_time, censor_time, admin_horizon));
  }
  return records;
}

/// Deterministic given spec.seed.
inline Cohort generate_cohort(const CohortSpec& spec) {
  spec.validate();
  std::vector<MatrixD> factors;
  for (const auto& g : spec.groups) factors.push_back(detail::covariance_factor(g.covariance));

  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& g : spec.groups) cumulative.push_back(acc += g.weight);

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  const Eigen::Index m = spec.features();
  Cohort cohort;
  cohort.features.resize(spec.n, m);
  cohort.truth.resize(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    const double u = detail::open_unit(rng) * acc;
    const auto pick = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    const auto g = static_cast<std::size_t>(std::min<std::ptrdiff_t>(pick, std::ssize(cumulative) - 1));
    VectorD z(m);
    for (Eigen::Index c = 0; c < m; ++c) z(c) = normal(rng);
    cohort.features.row(i) = (spec.groups[g].mean + factors[g] * z).transpose();
    cohort.truth[static_cast<std::size_t>(i)] = static_cast<int>(g);
  }
  std::vector<WeibullGroup> laws;
  for (const auto& g : spec.groups) laws.push_back(g.survival);
  cohort.records = simulate_survival(cohort.truth, laws, spec.censor_scale, spec.admin_horizon, rng);
  return cohort;
}

/// Mapping digit d (1..9) -> group, as a 9-entry table indexed by d - 1.
/// Without a seed the digits are taken in order ({1,2,3} -> 0, {4,5,6} -> 1,
/// {7,8,9} -> 2); with a seed they are shuffled first.
inline std::array<int, 9> digit_group_map(std::optional<std::uint64_t> seed = std::nullopt) {
  std::array<int, 9> digits{};
  std::iota(digits.begin(), digits.end(), 1);
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(digits.begin(), digits.end(), rng);
  }
  std::array<int, 9> map{};
  for (std::size_t pos = 0; pos < digits.size(); ++pos)
    map[static_cast<std::size_t>(digits[pos] - 1)] = static_cast<int>(pos / 3);
  return map;
}

inline std::vector<int> digits_to_groups(std::span<const int> digits,
                                         std::optional<std::uint64_t> seed = std::nullopt) {
  const auto map = digit_group_map(seed);
  std::vector<int> groups;
  groups.reserve(digits.size());
  for (int d : digits) {
    detail::require(d >= 1 && d <= 9, ErrorKind::InvalidInput,
                    "digit labels must lie in 1..9 (digit 0 is excluded)");
    groups.push_back(map[static_cast<std::size_t>(d - 1)]);
  }
  return groups;
}

}  // namespace survlr
