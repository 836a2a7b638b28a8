#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "survlr/error.hpp"
#include "survlr/logrank_loss.hpp"
#include "survlr/network.hpp"
#include "survlr/optim.hpp"
#include "survlr/preprocess.hpp"

namespace survlr {

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 50;
  int batch_size = 32;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(learning_rate >= 0.0, ErrorKind::InvalidInput, "learning rate must be >= 0");
    detail::require(epochs > 0, ErrorKind::InvalidInput, "epochs must be positive");
    detail::require(batch_size >= 2, ErrorKind::InvalidInput, "batch size must be >= 2");
    detail::require(weight_decay >= 0.0, ErrorKind::InvalidInput, "weight decay must be >= 0");
  }
};

struct EpochRecord {
  int epoch = 0;
  double objective = 0.0;
  double statistic = 0.0;
  double penalty = 0.0;
};

struct TrainResult {
  Network<double> network;
  EpochRecord initial;               // full-data objective before the first step
  std::vector<EpochRecord> history;  // full-data objective after each epoch
  long steps = 0;
  long skipped_batches = 0;          // batches without events or with singular V
};

/// Split a shuffled index order into batches. A short tail is kept when it
/// has >= 2 subjects and at least one event, otherwise it joins the previous batch.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                         std::size_t batch_size,
                                                         std::span<const SurvivalRecord> records) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  if (batches.size() >= 2 && batches.back().size() < batch_size) {
    const auto& tail = batches.back();
    const bool usable = tail.size() >= 2 && std::any_of(tail.begin(), tail.end(), [&](auto i) {
                          return records[i].event;
                        });
    if (!usable) {
      auto moved = std::move(batches.back());
      batches.pop_back();
      batches.back().insert(batches.back().end(), moved.begin(), moved.end());
    }
  }
  return batches;
}

inline EpochRecord evaluate_objective(const Network<double>& net, const MatrixD& features,
                                      std::span<const SurvivalRecord> records,
                                      const LossConfig& loss_cfg, int epoch) {
  const auto soft = forward(net, features);
  const auto value = total_objective(soft, records, loss_cfg);
  return {epoch, value.total, value.statistic, value.penalty};
}

/// Mini-batch AdamW ascent on the total objective, starting from `net`.
/// Deterministic for a given seed.
inline TrainResult train(Network<double> net, std::span<const SurvivalRecord> records,
                         const MatrixD& features, const TrainConfig& cfg, const LossConfig& loss_cfg) {
  cfg.validate();
  validate_records(records);
  detail::require(static_cast<std::size_t>(features.rows()) == records.size(),
                  ErrorKind::InvalidInput, "features and records differ in length");
  detail::require(records.size() >= 2, ErrorKind::InvalidInput, "need at least two subjects");
  detail::require(has_event(records), ErrorKind::NoEvents, "all training records are censored");
  loss_cfg.validate(net.spec.outputs());

  TrainResult result;
  result.initial = evaluate_objective(net, features, records, loss_cfg, 0);

  AdamW optimizer(net.params.size(), {.learning_rate = cfg.learning_rate,
                                      .weight_decay = cfg.weight_decay});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  VectorD flat = net.params.flatten();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& batch : make_batches(order, static_cast<std::size_t>(cfg.batch_size), records)) {
      std::vector<SurvivalRecord> batch_records;
      batch_records.reserve(batch.size());
      for (auto i : batch) batch_records.push_back(records[i]);
      if (!has_event(batch_records)) {
        ++result.skipped_batches;
        continue;
      }
      ObjectiveGradient<double> og;
      try {
        og = objective_gradient(net, select_rows(features, batch), std::span(batch_records), loss_cfg);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingularVariance) throw;
        ++result.skipped_batches;
        continue;
      }
      optimizer.step(flat, -og.grads.flatten());
      net.params.assign(flat);
      ++result.steps;
    }
    result.history.push_back(evaluate_objective(net, features, records, loss_cfg, epoch));
  }
  result.network = std::move(net);
  return result;
}

inline TrainResult train(const NetworkSpec& spec, std::span<const SurvivalRecord> records,
                         const MatrixD& features, const TrainConfig& cfg, const LossConfig& loss_cfg) {
  return train(make_network(spec), records, features, cfg, loss_cfg);
}

/// Reorder output units so that cluster 0 has the highest observed/expected
/// event ratio on (features, records), cluster k-1 the lowest. Returns the
/// old index of each new cluster.
inline std::vector<int> order_clusters_by_risk(Network<double>& net, const MatrixD& features,
                                               std::span<const SurvivalRecord> records) {
  const auto soft = forward(net, features);
  const auto table = partial_event_table(soft, records);
  const Eigen::Index k = soft.groups();
  std::vector<double> ratio(static_cast<std::size_t>(k));
  for (Eigen::Index g = 0; g < k; ++g) {
    double observed = 0.0, expected = 0.0;
    for (std::size_t j = 0; j < table.size(); ++j) {
      observed += table.per_group_events(static_cast<Eigen::Index>(j), g);
      expected += table.expected(j, g);
    }
    ratio[static_cast<std::size_t>(g)] = expected > 0.0 ? observed / expected : -1.0;
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ratio[static_cast<std::size_t>(a)] > ratio[static_cast<std::size_t>(b)];
  });
  auto& w = net.params.weights.back();
  auto& b = net.params.biases.back();
  const MatrixD w_old = w;
  const VectorD b_old = b;
  for (Eigen::Index g = 0; g < k; ++g) {
    w.row(g) = w_old.row(order[static_cast<std::size_t>(g)]);
    b(g) = b_old(order[static_cast<std::size_t>(g)]);
  }
  return order;
}

}  // namespace survlr
