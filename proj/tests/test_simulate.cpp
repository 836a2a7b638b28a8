#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "survlr/simulate.hpp"
#include "survlr/survival.hpp"

using namespace survlr;

TEST(Weibull, InverseTransformExamples) {
  const WeibullGroup g{0.539, 3068.812};
  EXPECT_NEAR(weibull_sample(g, 1.0 - std::exp(-1.0)), 3068.812, 1e-8);
  EXPECT_NEAR(weibull_sample(g, 0.5), g.median(), 1e-8);
  const WeibullGroup unit{1.0, 1.0};
  EXPECT_NEAR(weibull_sample(unit, 0.25), -std::log(0.75), 1e-15);
}

TEST(Weibull, RejectsBoundaryUniforms) {
  const WeibullGroup g{1.0, 1.0};
  for (double u : {0.0, 1.0, -0.1, 1.5}) EXPECT_THROW(weibull_sample(g, u), Error);
  EXPECT_THROW(WeibullGroup({0.0, 1.0}).validate(), Error);
  EXPECT_THROW(WeibullGroup({1.0, -1.0}).validate(), Error);
}

TEST(Weibull, ClosedFormMediansAreOrdered) {
  const auto groups = paper_weibull_groups();
  EXPECT_NEAR(groups[0].median(), 1554.7, 0.1);
  EXPECT_NEAR(groups[1].median(), 3400.7, 0.1);
  EXPECT_NEAR(groups[2].median(), 5349.5, 0.1);
}

TEST(Weibull, EmpiricalDistributionMatches) {
  std::mt19937_64 rng(3);
  for (const auto& g : paper_weibull_groups()) {
    std::vector<double> draws(100000);
    for (auto& d : draws) d = weibull_sample(g, detail::open_unit(rng));
    std::sort(draws.begin(), draws.end());
    const double median = 0.5 * (draws[49999] + draws[50000]);
    EXPECT_LT(std::abs(median / g.median() - 1.0), 0.01);
    double ks = 0.0;
    const double n = static_cast<double>(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const double f = g.cdf(draws[i]);
      ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    EXPECT_LT(ks, 0.01);
  }
}

TEST(Censoring, Limits) {
  std::mt19937_64 rng(4);
  const std::vector<WeibullGroup> laws{{1.0, 100.0}};
  const std::vector<int> truth(2000, 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& r : simulate_survival(truth, laws, inf, inf, rng)) EXPECT_TRUE(r.event);
  // horizon far below every event time: everything censored at the horizon
  for (const auto& r : simulate_survival(truth, laws, inf, 1e-12, rng)) {
    EXPECT_FALSE(r.event);
    EXPECT_EQ(r.time, 1e-12);
  }
}

TEST(Censoring, TiesResolveToCensored) {
  EXPECT_FALSE(detail::censor(5.0, 5.0, 10.0).event);
  EXPECT_FALSE(detail::censor(10.0, 20.0, 10.0).event);
  EXPECT_TRUE(detail::censor(4.0, 5.0, 10.0).event);
  EXPECT_EQ(detail::censor(7.0, 3.0, 10.0).time, 3.0);
}

TEST(OpenUnit, StrictlyInside) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = detail::open_unit(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

class PaperCohort : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { cohort = new Cohort(generate_cohort(paper_synthetic_spec(6000, 11))); }
  static void TearDownTestSuite() { delete cohort; }
  static Cohort* cohort;
};
Cohort* PaperCohort::cohort = nullptr;

TEST_F(PaperCohort, ShapesAndHorizon) {
  EXPECT_EQ(cohort->features.rows(), 6000);
  EXPECT_EQ(cohort->features.cols(), 3);
  for (const auto& r : cohort->records) {
    EXPECT_LE(r.time, 4000.0);
    EXPECT_GT(r.time, 0.0);
  }
}

TEST_F(PaperCohort, CensoringRateInRange) {
  const auto events = std::count_if(cohort->records.begin(), cohort->records.end(), [](auto& r) { return r.event; });
  const double censored = 1.0 - static_cast<double>(events) / 6000.0;
  EXPECT_GT(censored, 0.15);
  EXPECT_LT(censored, 0.60);
}

TEST_F(PaperCohort, GroupWeightsAndFeatureMeans) {
  for (int g = 0; g < 3; ++g) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < cohort->truth.size(); ++i)
      if (cohort->truth[i] == g) rows.push_back(i);
    EXPECT_NEAR(static_cast<double>(rows.size()) / 6000.0, 1.0 / 3.0, 0.03);
    VectorD mean = VectorD::Zero(3);
    for (auto i : rows) mean += cohort->features.row(static_cast<Eigen::Index>(i)).transpose();
    mean /= static_cast<double>(rows.size());
    VectorD expected = VectorD::Zero(3);
    expected(g) = 3.0 / std::sqrt(2.0);
    EXPECT_LT((mean - expected).cwiseAbs().maxCoeff(), 0.1);
  }
}

TEST_F(PaperCohort, KaplanMeierMediansOrderedByRisk) {
  const auto laws = paper_weibull_groups();
  std::vector<double> medians;
  for (int g = 0; g < 3; ++g) {
    std::vector<SurvivalRecord> sub;
    for (std::size_t i = 0; i < cohort->truth.size(); ++i)
      if (cohort->truth[i] == g) sub.push_back(cohort->records[i]);
    const auto km = kaplan_meier(sub);
    medians.push_back(km.median());
    // the shallow Weibull density makes the median itself noisy; compare S at the true median
    const double t = std::min(laws[static_cast<std::size_t>(g)].median(), 3999.0);
    EXPECT_NEAR(km.at(t), 1.0 - laws[static_cast<std::size_t>(g)].cdf(t), 0.04) << "group " << g;
  }
  EXPECT_LT(medians[0], medians[1]);
  EXPECT_LT(medians[1], medians[2]);
  // group 2's median lies past the administrative horizon
  EXPECT_TRUE(std::isinf(medians[2]));
}

TEST(Cohort, DeterministicForSeed) {
  const auto a = generate_cohort(paper_synthetic_spec(500, 21));
  const auto b = generate_cohort(paper_synthetic_spec(500, 21));
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.truth, b.truth);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].time, b.records[i].time);
    EXPECT_EQ(a.records[i].event, b.records[i].event);
  }
  const auto c = generate_cohort(paper_synthetic_spec(500, 22));
  EXPECT_NE(a.features, c.features);
}

TEST(Cohort, InvalidSpecs) {
  auto expect_spec_error = [](const CohortSpec& spec) {
    try {
      generate_cohort(spec);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidSpec);
    }
  };
  expect_spec_error(paper_synthetic_spec(0, 1));
  auto spec = paper_synthetic_spec(10, 1);
  spec.groups[1].covariance(0, 0) = -1.0;
  expect_spec_error(spec);
  spec = paper_synthetic_spec(10, 1);
  spec.groups[0].covariance(0, 1) = 0.5;
  expect_spec_error(spec);
  spec = paper_synthetic_spec(10, 1);
  spec.groups[0].weight = 0.5;
  expect_spec_error(spec);
  spec = paper_synthetic_spec(10, 1);
  spec.censor_scale = 0.0;
  expect_spec_error(spec);
}

TEST(Cohort, SingularCovarianceIsAllowed) {
  auto spec = paper_synthetic_spec(200, 3);
  spec.groups[0].covariance = MatrixD::Zero(3, 3);
  const auto cohort = generate_cohort(spec);
  for (std::size_t i = 0; i < cohort.truth.size(); ++i) {
    if (cohort.truth[i] != 0) continue;
    EXPECT_DOUBLE_EQ(cohort.features(static_cast<Eigen::Index>(i), 0), 3.0 / std::sqrt(2.0));
  }
}

TEST(Digits, IdentityMapping) {
  const std::vector<int> digits{1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_EQ(digits_to_groups(digits), (std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2}));
}

TEST(Digits, SeededMappingIsBalancedAndStable) {
  for (std::uint64_t seed : {1u, 7u, 12345u}) {
    const auto map = digit_group_map(seed);
    EXPECT_EQ(map, digit_group_map(seed));
    for (int g = 0; g < 3; ++g) EXPECT_EQ(std::count(map.begin(), map.end(), g), 3);
  }
}

TEST(Digits, ZeroRejected) {
  const std::vector<int> digits{1, 0, 3};
  try {
    digits_to_groups(digits);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}
