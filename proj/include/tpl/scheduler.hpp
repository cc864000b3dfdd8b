// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transitive loss weighting: inter-domain distance measurement, the
// lambda(t) = -ln(d (T - t) / theta) map, the (w_V, w_S) weight pair, and
// the competing fixed strategies used for comparisons.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tpl/common.hpp"

namespace tpl {

// Floor for the argument of the logarithm; caps lambda at ln(1/eps).
inline constexpr double kLambdaEps = 1e-6;
double lambda_max();

// One projected feature with its class and domain id (both 1-based).
struct FeaturePoint {
    std::vector<double> feature;
    std::size_t label = 0;
    std::size_t domain = 0;
};

// Per-(class, domain) mean features renormalized to unit length, keyed for
// deterministic iteration. Shared by the distance above and the analysis
// metrics so both report the same quantity.
std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> unit_centroids(
    std::span<const FeaturePoint> features);

// (1 - cos(a, b)) / 2 for unit vectors, clamped into [0, 1].
double half_cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

// Average inter-domain distance in [0, 1]: per class present in >= 2 domains,
// renormalized domain centroids are compared pairwise with (1 - cos)/2; the
// mean over pairs is averaged over classes.
double compute_domain_distance(std::span<const FeaturePoint> features);

// lambda = -ln(max(d (T - t) / theta, eps)) clamped to [0, lambda_max].
double compute_lambda(double d, std::size_t t, std::size_t total, double theta);

struct Weights {
    double w_v = 1.0;
    double w_s = 0.0;
};

// w_V = 1/(1 + lambda), w_S = 1 - w_V (so the pair sums to 1.0 exactly).
Weights compute_weights(double lambda);

enum class StrategyKind { transitive, joint, alternating, two_stage, cumulative };

// Round-trip helpers for configs and CLI flags.
const char* strategy_name(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);

struct SchedulerConfig {
    std::size_t total_iters = 5000;
    // theta <= 0 selects automatic calibration: theta = d0 * total_iters from
    // the first distance measurement, which puts lambda at ~0 for t = 0.
    double theta = 0.0;
    std::size_t checkpoint_every = 100;
};

// Weight pair under any strategy. `transitive` requires t < total_iters; the
// fixed strategies accept 0 <= t <= total_iters. `theta` must already be
// resolved (> 0) when kind == transitive.
Weights strategy_weights(StrategyKind kind, std::size_t t, const SchedulerConfig& cfg,
                         double d);

// Per-domain distances: d^m averages each listed domain's class centroids
// against all other domains' centroids of the same class.
std::map<std::size_t, double> per_domain_distance(std::span<const FeaturePoint> features,
                                                  std::span<const std::size_t> domains);

// Weight pairs from the per-domain distances via the lambda pipeline.
std::map<std::size_t, Weights> per_domain_weights(std::span<const FeaturePoint> features,
                                                  std::size_t t,
                                                  const SchedulerConfig& cfg,
                                                  std::span<const std::size_t> domains);

struct ScheduleRecord {
    std::size_t t = 0;
    double d = 0.0;
    double lambda = 0.0;
    double w_v = 1.0;
    double w_s = 0.0;
};

// Owned by the training loop: holds the latest distance measurement and the
// per-checkpoint history behind the weight-trajectory plots.
class ScheduleState {
public:
    ScheduleState(StrategyKind kind, SchedulerConfig cfg);

    // Refresh the distance estimate at iteration t (called every
    // checkpoint_every iterations). The first call resolves automatic theta
    // and every call appends one history record.
    void on_checkpoint(std::size_t t, double d);

    // Weights for iteration t under the configured strategy, using the most
    // recent distance estimate. Updates the live (t, lambda, weights) fields.
    Weights weights_at(std::size_t t);

    StrategyKind kind() const { return kind_; }
    const SchedulerConfig& config() const { return cfg_; }
    double distance() const { return d_; }
    double lambda() const { return lambda_; }
    Weights weights() const { return weights_; }
    std::size_t iteration() const { return t_; }
    const std::vector<ScheduleRecord>& history() const { return history_; }

    // CSV with header "t,d,lambda,w_V,w_S", one row per checkpoint record.
    void write_history_csv(std::ostream& os) const;

private:
    StrategyKind kind_;
    SchedulerConfig cfg_;
    std::size_t t_ = 0;
    double d_ = 1.0;
    double lambda_ = 0.0;
    Weights weights_;
    std::vector<ScheduleRecord> history_;
};

}  // namespace tpl
