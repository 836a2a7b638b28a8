#pragma once

// Ground-truth recovery metrics and the cross-validation harness.

#include <algorithm>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/logrank_loss.hpp"
#include "survlr/network.hpp"
#include "survlr/preprocess.hpp"
#include "survlr/survival.hpp"
#include "survlr/train.hpp"

namespace survlr {

/// Exhaustive search for the relabeling pred -> truth with the most agreement.
/// Returns matching[pred] = truth label; ties keep the lexicographically first
/// permutation.
inline std::vector<int> match_clusters(std::span<const int> pred, std::span<const int> truth, int k) {
  detail::require(k <= 8, ErrorKind::UnsupportedK, "cluster matching supports k <= 8");
  detail::require(k >= 1, ErrorKind::InvalidInput, "k must be positive");
  detail::require(pred.size() == truth.size(), ErrorKind::InvalidInput,
                  "predicted and true labels differ in length");
  std::vector<long> counts(static_cast<std::size_t>(k * k), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::require(pred[i] >= 0 && pred[i] < k && truth[i] >= 0 && truth[i] < k,
                    ErrorKind::InvalidInput, "label outside [0, k)");
    ++counts[static_cast<std::size_t>(pred[i] * k + truth[i])];
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  long best_score = -1;
  do {
    long score = 0;
    for (int p = 0; p < k; ++p) score += counts[static_cast<std::size_t>(p * k + perm[static_cast<std::size_t>(p)])];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<int> apply_matching(std::span<const int> pred, std::span<const int> matching) {
  std::vector<int> out;
  out.reserve(pred.size());
  for (int p : pred) out.push_back(matching[static_cast<std::size_t>(p)]);
  return out;
}

/// Columns rearranged so that column matching[g] holds the old column g.
inline MatrixD apply_matching(const MatrixD& probs, std::span<const int> matching) {
  MatrixD out(probs.rows(), probs.cols());
  for (Eigen::Index g = 0; g < probs.cols(); ++g) out.col(matching[static_cast<std::size_t>(g)]) = probs.col(g);
  return out;
}

inline double accuracy(std::span<const int> pred, std::span<const int> truth) {
  detail::require(!pred.empty() && pred.size() == truth.size(), ErrorKind::InvalidInput,
                  "label vectors must be non-empty and equally long");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Mann-Whitney AUC of `scores` for subjects with labels[i] == positive
/// against the rest, with mid-ranks for tied scores.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels, int positive) {
  detail::require(scores.size() == labels.size(), ErrorKind::InvalidInput,
                  "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start;
    while (stop < n && scores[order[stop]] == scores[order[start]]) ++stop;
    const double mid_rank = 0.5 * static_cast<double>(start + 1 + stop);
    for (std::size_t t = start; t < stop; ++t)
      if (labels[order[t]] == positive) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    start = stop;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  detail::require(n_pos > 0.0 && n_neg > 0.0, ErrorKind::UndefinedMetric,
                  "class " + std::to_string(positive) + " has a single-class split");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// One-vs-rest AUC per class; column c of `probs` scores class c.
inline std::vector<double> roc_auc_ovr(const MatrixD& probs, std::span<const int> truth) {
  detail::require(static_cast<std::size_t>(probs.rows()) == truth.size(), ErrorKind::InvalidInput,
                  "probabilities and labels differ in length");
  std::vector<double> out;
  std::vector<double> scores(truth.size());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    for (std::size_t i = 0; i < truth.size(); ++i) scores[i] = probs(static_cast<Eigen::Index>(i), c);
    out.push_back(roc_auc(scores, truth, static_cast<int>(c)));
  }
  return out;
}

/// Rows = truth, columns = prediction, each row normalized to 1.
inline MatrixD confusion_matrix(std::span<const int> pred, std::span<const int> truth, int k) {
  detail::require(pred.size() == truth.size(), ErrorKind::InvalidInput, "label vectors differ in length");
  MatrixD m = MatrixD::Zero(k, k);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    detail::require(pred[i] >= 0 && pred[i] < k && truth[i] >= 0 && truth[i] < k,
                    ErrorKind::InvalidInput, "label outside [0, k)");
    m(truth[i], pred[i]) += 1.0;
  }
  for (int r = 0; r < k; ++r) {
    const double total = m.row(r).sum();
    detail::require(total > 0.0, ErrorKind::UndefinedMetric,
                    "truth class " + std::to_string(r) + " is empty");
    m.row(r) /= total;
  }
  return m;
}

inline std::vector<int> argmax_rows(const MatrixD& probs) {
  std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index g = 1; g < probs.cols(); ++g)
      if (probs(i, g) > probs(i, best)) best = g;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

struct RecoveryMetrics {
  std::vector<int> matching;
  std::vector<double> auc_per_class;
  MatrixD confusion;
  double accuracy = 0.0;
};

struct RecoveryReport {
  std::size_t subjects = 0;
  std::vector<int> cluster_sizes;
  double hard_logrank_statistic = 0.0;
  double hard_logrank_p = 1.0;
  double c_index = 0.5;
  std::optional<RecoveryMetrics> recovery;  // only with ground truth
};

/// Logrank test over the non-empty predicted clusters; fewer than two
/// non-empty clusters give statistic 0 and p = 1.
inline LogrankResult logrank_of_clusters(std::span<const int> labels,
                                         std::span<const SurvivalRecord> records, int k) {
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  for (int g : labels) seen[static_cast<std::size_t>(g)] = 1;
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int used = 0;
  for (std::size_t g = 0; g < seen.size(); ++g)
    if (seen[g]) remap[g] = used++;
  if (used < 2) return LogrankResult{0.0, 1.0, 0, {}, {}};
  std::vector<int> compact;
  compact.reserve(labels.size());
  for (int g : labels) compact.push_back(remap[static_cast<std::size_t>(g)]);
  return multivariate_logrank_hard(records, compact, used);
}

/// Report for memberships whose columns are ordered by decreasing risk
/// (cluster 0 = shortest survival). The c-index uses the expected position
/// sum_g p_g (k - 1 - g) as risk score.
inline RecoveryReport recovery_report(const MatrixD& probs, std::span<const SurvivalRecord> records,
                                      const std::optional<std::vector<int>>& truth) {
  const int k = static_cast<int>(probs.cols());
  const auto labels = argmax_rows(probs);
  RecoveryReport report;
  report.subjects = records.size();
  report.cluster_sizes.assign(static_cast<std::size_t>(k), 0);
  for (int g : labels) ++report.cluster_sizes[static_cast<std::size_t>(g)];

  const auto lr = logrank_of_clusters(labels, records, k);
  report.hard_logrank_statistic = lr.statistic;
  report.hard_logrank_p = lr.p_value;

  std::vector<double> risk(records.size());
  for (std::size_t i = 0; i < risk.size(); ++i) {
    double s = 0.0;
    for (int g = 0; g < k; ++g) s += probs(static_cast<Eigen::Index>(i), g) * (k - 1 - g);
    risk[i] = s;
  }
  report.c_index = concordance_index(risk, records);

  if (truth) {
    RecoveryMetrics m;
    m.matching = match_clusters(labels, *truth, k);
    const auto matched = apply_matching(labels, m.matching);
    m.accuracy = accuracy(matched, *truth);
    m.auc_per_class = roc_auc_ovr(apply_matching(probs, m.matching), *truth);
    m.confusion = confusion_matrix(matched, *truth, k);
    report.recovery = std::move(m);
  }
  return report;
}

/// Kaplan-Meier curve per predicted cluster; clusters without events get none.
inline std::vector<std::optional<StepSurvivalCurve>> km_by_cluster(std::span<const int> labels,
                                                                   std::span<const SurvivalRecord> records,
                                                                   int k) {
  std::vector<std::optional<StepSurvivalCurve>> curves(static_cast<std::size_t>(k));
  for (int g = 0; g < k; ++g) {
    std::vector<SurvivalRecord> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == g) members.push_back(records[i]);
    if (!members.empty() && has_event(members)) curves[static_cast<std::size_t>(g)] = kaplan_meier(members);
  }
  return curves;
}

struct FoldPlan {
  int n_folds = 5;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> folds;

  /// Shuffled round-robin assignment; fold sizes differ by at most one.
  static FoldPlan make(std::size_t n, int n_folds, std::uint64_t seed) {
    detail::require(n_folds >= 2, ErrorKind::InvalidPlan,
                    "cross-validation needs at least 2 folds (a single fold leaves no training data)");
    detail::require(static_cast<std::size_t>(n_folds) <= n, ErrorKind::InvalidPlan,
                    "more folds than subjects");
    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.seed = seed;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    plan.folds.resize(static_cast<std::size_t>(n_folds));
    for (std::size_t i = 0; i < n; ++i) plan.folds[i % static_cast<std::size_t>(n_folds)].push_back(order[i]);
    for (auto& f : plan.folds) std::sort(f.begin(), f.end());
    return plan;
  }

  std::vector<std::size_t> train_indices(int fold) const {
    std::vector<std::size_t> out;
    for (int f = 0; f < n_folds; ++f)
      if (f != fold) out.insert(out.end(), folds[static_cast<std::size_t>(f)].begin(),
                                folds[static_cast<std::size_t>(f)].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct CvOptions {
  bool standardize = true;
  int jobs = 1;
};

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  Standardizer standardizer;
  TrainResult training;
  MatrixD test_probs;  // risk-ordered memberships of the withheld subjects
  RecoveryReport report;
};

struct CvResult {
  std::vector<FoldResult> folds;
  MatrixD pooled_probs;  // withheld-fold memberships, in original subject order
  RecoveryReport pooled;
};

namespace detail {

inline FoldResult run_fold(int fold, const MatrixD& features, std::span<const SurvivalRecord> records,
                           const std::optional<std::vector<int>>& truth, const NetworkSpec& spec,
                           const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                           const FoldPlan& plan, const CvOptions& options) {
  FoldResult out;
  out.fold = fold;
  out.test = plan.folds[static_cast<std::size_t>(fold)];
  out.train = plan.train_indices(fold);

  const auto train_records = select(records, out.train);
  const auto test_records = select(records, out.test);
  const std::string name = "fold " + std::to_string(fold);
  require(has_event(train_records), ErrorKind::NoEvents, name + ": training partition has no events");
  require(has_event(test_records), ErrorKind::NoEvents, name + ": withheld partition has no events");

  if (options.standardize) out.standardizer = Standardizer::fit(features, out.train);
  const MatrixD train_x = out.standardizer.apply(select_rows(features, out.train));
  const MatrixD test_x = out.standardizer.apply(select_rows(features, out.test));

  NetworkSpec fold_spec = spec;
  fold_spec.seed = spec.seed + static_cast<std::uint64_t>(fold);
  TrainConfig fold_cfg = train_cfg;
  fold_cfg.seed = train_cfg.seed + static_cast<std::uint64_t>(fold);
  out.training = train(fold_spec, train_records, train_x, fold_cfg, loss_cfg);
  order_clusters_by_risk(out.training.network, train_x, train_records);

  out.test_probs = forward(out.training.network, test_x).probs();
  std::optional<std::vector<int>> fold_truth;
  if (truth) fold_truth = select(std::span<const int>(*truth), out.test);
  out.report = recovery_report(out.test_probs, test_records, fold_truth);
  return out;
}

}  // namespace detail

/// Train on all folds but one, predict the withheld fold, repeat. Feature
/// standardization is fit on the training partition of each fold only. The
/// pooled report is computed over the concatenated withheld predictions.
inline CvResult run_cv_experiment(const MatrixD& features, std::span<const SurvivalRecord> records,
                                  const std::optional<std::vector<int>>& truth, const NetworkSpec& spec,
                                  const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                                  const FoldPlan& plan, const CvOptions& options = {}) {
  validate_records(records);
  detail::require(static_cast<std::size_t>(features.rows()) == records.size(), ErrorKind::InvalidInput,
                  "features and records differ in length");
  detail::require(!truth || truth->size() == records.size(), ErrorKind::InvalidInput,
                  "truth labels and records differ in length");
  detail::require(plan.n_folds >= 2 && plan.folds.size() == static_cast<std::size_t>(plan.n_folds),
                  ErrorKind::InvalidPlan, "fold plan needs at least 2 folds");
  spec.validate();

  CvResult result;
  result.folds.resize(static_cast<std::size_t>(plan.n_folds));
  auto run = [&](int f) {
    return detail::run_fold(f, features, records, truth, spec, train_cfg, loss_cfg, plan, options);
  };
  if (options.jobs > 1) {
    for (int start = 0; start < plan.n_folds; start += options.jobs) {
      std::vector<std::future<FoldResult>> pending;
      for (int f = start; f < std::min(plan.n_folds, start + options.jobs); ++f)
        pending.push_back(std::async(std::launch::async, run, f));
      for (std::size_t p = 0; p < pending.size(); ++p)
        result.folds[static_cast<std::size_t>(start) + p] = pending[p].get();
    }
  } else {
    for (int f = 0; f < plan.n_folds; ++f) result.folds[static_cast<std::size_t>(f)] = run(f);
  }

  result.pooled_probs = MatrixD::Zero(features.rows(), spec.outputs());
  for (const auto& fold : result.folds)
    for (std::size_t t = 0; t < fold.test.size(); ++t)
      result.pooled_probs.row(static_cast<Eigen::Index>(fold.test[t])) =
          fold.test_probs.row(static_cast<Eigen::Index>(t));
  result.pooled = recovery_report(result.pooled_probs, records, truth);
  return result;
}

using MembershipMetric = std::function<double(const SoftAssignment<double>&, std::span<const SurvivalRecord>)>;

/// Partial logrank statistic of the predicted memberships.
inline MembershipMetric logrank_metric(LossConfig config = {}) {
  return [config](const SoftAssignment<double>& soft, std::span<const SurvivalRecord> records) {
    return partial_logrank_statistic(soft, records, config);
  };
}

/// Mean drop in `metric` when one feature column is shuffled, per feature,
/// averaged over `repeats` seeded permutations.
inline VectorD permutation_importance(const Network<double>& net, const MatrixD& features,
                                      std::span<const SurvivalRecord> records,
                                      const MembershipMetric& metric, int repeats = 10,
                                      std::uint64_t seed = 0) {
  detail::require(repeats > 0, ErrorKind::InvalidInput, "repeats must be positive");
  const double baseline = metric(forward(net, features), records);
  std::mt19937_64 rng(seed);
  VectorD importance = VectorD::Zero(features.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), rng);
      MatrixD shuffled = features;
      for (std::size_t i = 0; i < order.size(); ++i)
        shuffled(static_cast<Eigen::Index>(i), c) = features(order[i], c);
      total += baseline - metric(forward(net, shuffled), records);
    }
    importance(c) = total / repeats;
  }
  return importance;
}

}  // namespace survlr
