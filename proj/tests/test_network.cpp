#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "survlr/network.hpp"
#include "survlr/optim.hpp"
#include "survlr/simulate.hpp"
#include "survlr/train.hpp"

using namespace survlr;

namespace {

MatrixD random_features(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  std::normal_distribution<double> normal;
  MatrixD x(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < m; ++c) x(i, c) = normal(rng);
  return x;
}

NetworkSpec small_spec(Activation a, std::uint64_t seed) {
  return NetworkSpec{{3, 5, 3}, a, seed};
}

}  // namespace

TEST(Forward, ZeroParametersGiveUniformRows) {
  const auto net = zero_network<double>(NetworkSpec{{4, 6, 3}});
  std::mt19937_64 rng(1);
  const auto soft = forward(net, random_features(rng, 10, 4));
  EXPECT_LE((soft.probs().array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
}

TEST(Forward, SingleLinearLayerIsMonotoneInInput) {
  auto net = zero_network<double>(NetworkSpec{{1, 2}});
  net.params.weights[0](0, 0) = 1.0;
  MatrixD x(5, 1);
  x << -2, -1, 0, 1, 2;
  const auto soft = forward(net, x);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(soft.probs()(i, 0), 1.0 / (1.0 + std::exp(-x(i, 0))), 1e-15);
  for (Eigen::Index i = 1; i < 5; ++i) EXPECT_GT(soft.probs()(i, 0), soft.probs()(i - 1, 0));
}

TEST(Forward, DeterministicForFixedSeed) {
  std::mt19937_64 rng(2);
  const MatrixD x = random_features(rng, 20, 3);
  const auto a = forward(make_network(small_spec(Activation::Rectifier, 9)), x);
  const auto b = forward(make_network(small_spec(Activation::Rectifier, 9)), x);
  EXPECT_EQ(a.probs(), b.probs());
  const auto c = forward(make_network(small_spec(Activation::Rectifier, 10)), x);
  EXPECT_NE(a.probs(), c.probs());
}

TEST(Forward, ShapeMismatch) {
  const auto net = make_network(small_spec(Activation::Tanh, 1));
  try {
    forward(net, MatrixD(MatrixD::Zero(4, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
}

TEST(NetworkSpec, ActivationNames) {
  for (auto a : {Activation::Rectifier, Activation::Tanh, Activation::Identity})
    EXPECT_EQ(parse_activation(to_string(a)), a);
  EXPECT_EQ(parse_activation("relu"), Activation::Rectifier);
  EXPECT_EQ(parse_activation("linear"), Activation::Identity);
  EXPECT_THROW(parse_activation("sigmoid"), Error);
}

TEST(NetworkSpec, Validation) {
  EXPECT_THROW(make_network(NetworkSpec{{3}}), Error);
  EXPECT_THROW(make_network(NetworkSpec{{3, 1}}), Error);
  EXPECT_THROW(make_network(NetworkSpec{{3, 0, 2}}), Error);
}

TEST(Params, FlattenAssignRoundTrip) {
  auto net = make_network(NetworkSpec{{3, 4, 2, 3}, Activation::Tanh, 3});
  const VectorD flat = net.params.flatten();
  EXPECT_EQ(flat.size(), 3 * 4 + 4 + 4 * 2 + 2 + 2 * 3 + 3);
  auto copy = zero_network<double>(net.spec);
  copy.params.assign(flat);
  EXPECT_EQ(copy.params.flatten(), flat);
  EXPECT_EQ(copy.params.weights[1], net.params.weights[1]);
}

class BackpropFiniteDifference : public ::testing::TestWithParam<Activation> {};

TEST_P(BackpropFiniteDifference, ParameterGradientsMatch) {
  using LD = long double;
  std::mt19937_64 rng(100);
  for (int rep = 0; rep < 5; ++rep) {
    const auto records = oracle::random_records(rng, 24, 0.3);
    const Matrix<LD> x = random_features(rng, 24, 3).cast<LD>();
    const auto net = make_network(small_spec(GetParam(), 200 + static_cast<unsigned>(rep))).cast<LD>();
    const LossConfig cfg;
    const auto og = objective_gradient(net, x, records, cfg);
    const Vector<LD> analytic = og.grads.flatten();
    const Vector<LD> theta = net.params.flatten();
    const LD h = 1e-7L;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
      auto probe = net;
      Vector<LD> t = theta;
      t(p) += h;
      probe.params.assign(t);
      const LD up = total_objective(forward(probe, x), records, cfg).total;
      t(p) -= 2 * h;
      probe.params.assign(t);
      const LD down = total_objective(forward(probe, x), records, cfg).total;
      const LD fd = (up - down) / (2 * h);
      if (std::fabs(analytic(p)) < 1e-8L) continue;
      EXPECT_LT(static_cast<double>(std::fabs(fd - analytic(p)) / std::fabs(analytic(p))), 1e-4)
          << "param " << p << " rep " << rep;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, BackpropFiniteDifference,
                         ::testing::Values(Activation::Rectifier, Activation::Tanh, Activation::Identity));

TEST(PredictLabels, TieBreaksToLowestIndex) {
  const auto net = zero_network<double>(NetworkSpec{{2, 3}});
  const auto labels = predict_labels(net, MatrixD(MatrixD::Ones(4, 2)));
  for (int l : labels) EXPECT_EQ(l, 0);
}

TEST(PredictLabels, ArgmaxAndShiftInvariance) {
  auto net = zero_network<double>(NetworkSpec{{1, 3}});
  net.params.biases[0] << std::log(0.1), std::log(0.7), std::log(0.2);
  const MatrixD x = MatrixD::Zero(1, 1);
  EXPECT_NEAR(forward(net, x).probs()(0, 1), 0.7, 1e-15);
  EXPECT_EQ(predict_labels(net, x)[0], 1);
  net.params.biases[0].array() += 12.5;
  EXPECT_EQ(predict_labels(net, x)[0], 1);
}

TEST(AdamW, ZeroGradientIsPureDecoupledShrink) {
  VectorD p(3);
  p << 1.0, -2.0, 0.5;
  const VectorD start = p;
  AdamW opt(3, {.learning_rate = 0.01, .weight_decay = 0.1});
  opt.step(p, VectorD::Zero(3));
  EXPECT_EQ(p, VectorD(start * (1.0 - 0.01 * 0.1)));
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  VectorD p = VectorD::Zero(2);
  VectorD g(2);
  g << 3.0, -0.2;
  AdamW opt(2, {.learning_rate = 0.05, .weight_decay = 0.0});
  opt.step(p, g);
  // bias-corrected first step is lr * g / (|g| + eps)
  EXPECT_NEAR(p(0), -0.05 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p(1), 0.05 * 0.2 / (0.2 + 1e-8), 1e-15);
}

class Training : public ::testing::Test {
 protected:
  void SetUp() override {
    cohort = generate_cohort(paper_synthetic_spec(400, 5));
  }
  Cohort cohort;
};

TEST_F(Training, ZeroLearningRateLeavesParametersUnchanged) {
  for (double decay : {0.0, 0.01}) {
    const auto spec = small_spec(Activation::Rectifier, 4);
    TrainConfig cfg{.learning_rate = 0.0, .epochs = 2, .batch_size = 32, .weight_decay = decay, .seed = 1};
    const auto result = train(spec, cohort.records, cohort.features, cfg, LossConfig{});
    EXPECT_EQ(result.network.params.flatten(), make_network(spec).params.flatten());
    EXPECT_EQ(result.history.size(), 2u);
  }
}

TEST_F(Training, DeterministicForSeed) {
  const auto spec = small_spec(Activation::Rectifier, 4);
  TrainConfig cfg{.learning_rate = 0.01, .epochs = 3, .batch_size = 32, .weight_decay = 0.01, .seed = 8};
  const auto a = train(spec, cohort.records, cohort.features, cfg, LossConfig{});
  const auto b = train(spec, cohort.records, cohort.features, cfg, LossConfig{});
  EXPECT_EQ(a.network.params.flatten(), b.network.params.flatten());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].objective, b.history[e].objective);
}

TEST_F(Training, FullBatchMatchesSingleBatchLoop) {
  const auto spec = small_spec(Activation::Tanh, 6);
  const auto n = static_cast<int>(cohort.records.size());
  TrainConfig cfg{.learning_rate = 0.02, .epochs = 5, .batch_size = n, .weight_decay = 0.01, .seed = 3};
  const auto trained = train(spec, cohort.records, cohort.features, cfg, LossConfig{});

  auto net = make_network(spec);
  AdamW opt(net.params.size(), {.learning_rate = 0.02, .weight_decay = 0.01});
  VectorD flat = net.params.flatten();
  for (int e = 0; e < 5; ++e) {
    const auto og = objective_gradient(net, cohort.features, cohort.records, LossConfig{});
    opt.step(flat, -og.grads.flatten());
    net.params.assign(flat);
  }
  EXPECT_LE((trained.network.params.flatten() - flat).cwiseAbs().maxCoeff(), 1e-9);
}

TEST_F(Training, HeavyPenaltyBalancesClasses) {
  std::mt19937_64 rng(12);
  const MatrixD noise = random_features(rng, 400, 3);
  TrainConfig cfg{.learning_rate = 0.01, .epochs = 50, .batch_size = 32, .weight_decay = 0.01, .seed = 2};
  LossConfig loss;
  loss.penalty_weight = 100.0;
  const auto result = train(NetworkSpec{{3, 16, 3}, Activation::Rectifier, 3}, cohort.records, noise, cfg, loss);
  const VectorD means = forward(result.network, noise).class_means();
  EXPECT_LT((means.array() - 1.0 / 3.0).abs().maxCoeff(), 0.05) << means.transpose();
}

TEST_F(Training, PaperSetupIncreasesObjective) {
  TrainConfig cfg{.learning_rate = 0.01, .epochs = 50, .batch_size = 32, .weight_decay = 0.01, .seed = 0};
  const auto result = train(NetworkSpec{{3, 16, 3}, Activation::Rectifier, 0}, cohort.records, cohort.features,
                            cfg, LossConfig{});
  ASSERT_EQ(result.history.size(), 50u);
  EXPECT_GT(result.history.back().objective, result.initial.objective);
}

TEST_F(Training, AllCensoredFails) {
  auto censored = cohort.records;
  for (auto& r : censored) r.event = false;
  try {
    train(small_spec(Activation::Rectifier, 0), censored, cohort.features, TrainConfig{}, LossConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoEvents);
  }
}

TEST(Batches, ShortTailRules) {
  std::vector<SurvivalRecord> records(10, SurvivalRecord{1.0, true});
  std::vector<std::size_t> order(10);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // 10 = 4 + 4 + 2: tail of two with events is kept
  EXPECT_EQ(make_batches(order, 4, records).size(), 3u);
  // 10 = 3 + 3 + 3 + 1: single-subject tail is folded in
  auto b = make_batches(order, 3, records);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.back().size(), 4u);
  // tail without events is folded in
  records[8].event = records[9].event = false;
  b = make_batches(order, 4, records);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b.back().size(), 6u);
}

TEST(RiskOrdering, HighestRiskClusterFirst) {
  auto cohort = generate_cohort(paper_synthetic_spec(600, 2));
  // a network that reads the true group off the features, in reversed order
  auto net = zero_network<double>(NetworkSpec{{3, 3}});
  net.params.weights[0] << 0, 0, 5, 0, 5, 0, 5, 0, 0;
  const auto order = order_clusters_by_risk(net, cohort.features, cohort.records);
  EXPECT_EQ(order, (std::vector<int>{2, 1, 0}));
  const auto labels = predict_labels(net, cohort.features);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) agree += labels[i] == cohort.truth[i];
  EXPECT_GT(static_cast<double>(agree) / static_cast<double>(labels.size()), 0.8);
}
