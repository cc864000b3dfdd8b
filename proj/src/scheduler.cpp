// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <utility>

namespace tpl {

namespace {

using Key = std::pair<std::size_t, std::size_t>;  // (class, domain)

struct Centroid {
    std::vector<double> sum;
    std::size_t count = 0;
};

}  // namespace

std::map<Key, std::vector<double>> unit_centroids(std::span<const FeaturePoint> features) {
    if (features.empty()) {
        throw ShapeError("domain distance: empty feature list");
    }
    const std::size_t dim = features.front().feature.size();
    std::map<Key, Centroid> acc;
    for (const FeaturePoint& f : features) {
        if (f.feature.size() != dim) {
            throw ShapeError(strf("domain distance: feature width ", f.feature.size(),
                                  " does not match first width ", dim));
        }
        if (f.label == 0 || f.domain == 0) {
            throw DataError("domain distance: class and domain ids are 1-based");
        }
        Centroid& c = acc[{f.label, f.domain}];
        if (c.sum.empty()) c.sum.assign(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) c.sum[i] += f.feature[i];
        ++c.count;
    }
    std::map<Key, std::vector<double>> out;
    for (auto& [key, c] : acc) {
        double norm = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            c.sum[i] /= static_cast<double>(c.count);
            norm += c.sum[i] * c.sum[i];
        }
        norm = std::sqrt(norm);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw NumericError(strf("domain distance: zero-norm centroid for class ",
                                    key.first, " domain ", key.second));
        }
        for (double& v : c.sum) v /= norm;
        out.emplace(key, std::move(c.sum));
    }
    return out;
}

double half_cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    dot = std::clamp(dot, -1.0, 1.0);
    return (1.0 - dot) / 2.0;
}

namespace {

// class -> (domain -> unit centroid)
std::map<std::size_t, std::map<std::size_t, std::vector<double>>> by_class(
    std::span<const FeaturePoint> features) {
    std::map<std::size_t, std::map<std::size_t, std::vector<double>>> grouped;
    for (auto& [key, mu] : unit_centroids(features)) {
        grouped[key.first].emplace(key.second, std::move(mu));
    }
    return grouped;
}

}  // namespace

double lambda_max() { return std::log(1.0 / kLambdaEps); }

double compute_domain_distance(std::span<const FeaturePoint> features) {
    auto grouped = by_class(features);
    double class_sum = 0.0;
    std::size_t class_count = 0;
    for (const auto& [cls, domains] : grouped) {
        (void)cls;
        if (domains.size() < 2) continue;
        double pair_sum = 0.0;
        std::size_t pair_count = 0;
        for (auto a = domains.begin(); a != domains.end(); ++a) {
            for (auto b = std::next(a); b != domains.end(); ++b) {
                pair_sum += half_cosine_distance(a->second, b->second);
                ++pair_count;
            }
        }
        class_sum += pair_sum / static_cast<double>(pair_count);
        ++class_count;
    }
    if (class_count == 0) {
        throw DataError("domain distance: no class is present in two or more domains");
    }
    return class_sum / static_cast<double>(class_count);
}

double compute_lambda(double d, std::size_t t, std::size_t total, double theta) {
    if (!(theta > 0.0)) {
        throw UsageError(strf("compute_lambda: theta must be positive, got ", theta));
    }
    if (!(d >= 0.0)) {
        throw UsageError(strf("compute_lambda: distance must be non-negative, got ", d));
    }
    if (total == 0 || t >= total) {
        throw UsageError(strf("compute_lambda: iteration ", t,
                              " must precede total iterations ", total));
    }
    const double remaining = static_cast<double>(total - t);
    const double arg = std::max(d * remaining / theta, kLambdaEps);
    // + 0.0 turns -ln(1) = -0.0 into +0.0 so exports never show "-0".
    return std::clamp(-std::log(arg), 0.0, lambda_max()) + 0.0;
}

Weights compute_weights(double lambda) {
    if (!(lambda >= 0.0)) {
        throw UsageError(strf("compute_weights: lambda must be non-negative, got ", lambda));
    }
    Weights w;
    w.w_v = 1.0 / (1.0 + lambda);
    w.w_s = 1.0 - w.w_v;
    return w;
}

const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::transitive: return "transitive";
        case StrategyKind::joint: return "joint";
        case StrategyKind::alternating: return "alternating";
        case StrategyKind::two_stage: return "two_stage";
        case StrategyKind::cumulative: return "cumulative";
    }
    throw UsageError("strategy_name: unknown strategy kind");
}

StrategyKind parse_strategy(const std::string& name) {
    for (StrategyKind k : {StrategyKind::transitive, StrategyKind::joint,
                           StrategyKind::alternating, StrategyKind::two_stage,
                           StrategyKind::cumulative}) {
        if (name == strategy_name(k)) return k;
    }
    throw UsageError(strf("unknown strategy \"", name,
                          "\" (expected transitive, joint, alternating, two_stage, "
                          "or cumulative)"));
}

Weights strategy_weights(StrategyKind kind, std::size_t t, const SchedulerConfig& cfg,
                         double d) {
    if (cfg.total_iters == 0) {
        throw UsageError("strategy_weights: total_iters must be positive");
    }
    if (kind != StrategyKind::transitive && t > cfg.total_iters) {
        throw UsageError(strf("strategy_weights: iteration ", t, " exceeds total ",
                              cfg.total_iters));
    }
    switch (kind) {
        case StrategyKind::transitive:
            return compute_weights(compute_lambda(d, t, cfg.total_iters, cfg.theta));
        case StrategyKind::joint:
            return {0.5, 0.5};
        case StrategyKind::alternating: {
            if (cfg.checkpoint_every == 0) {
                throw UsageError("strategy_weights: checkpoint_every must be positive");
            }
            const bool even = (t / cfg.checkpoint_every) % 2 == 0;
            return even ? Weights{1.0, 0.0} : Weights{0.0, 1.0};
        }
        case StrategyKind::two_stage:
            return 2 * t < cfg.total_iters ? Weights{1.0, 0.0} : Weights{0.0, 1.0};
        case StrategyKind::cumulative: {
            const double r = static_cast<double>(t) / static_cast<double>(cfg.total_iters);
            Weights w;
            w.w_s = r * r;
            w.w_v = 1.0 - w.w_s;
            return w;
        }
    }
    throw UsageError("strategy_weights: unknown strategy kind");
}

std::map<std::size_t, double> per_domain_distance(std::span<const FeaturePoint> features,
                                                  std::span<const std::size_t> domains) {
    auto grouped = by_class(features);
    std::map<std::size_t, double> out;
    for (std::size_t m : domains) {
        double class_sum = 0.0;
        std::size_t class_count = 0;
        bool domain_seen = false;
        for (const auto& [cls, centroids] : grouped) {
            (void)cls;
            auto self = centroids.find(m);
            if (self == centroids.end()) continue;
            domain_seen = true;
            double other_sum = 0.0;
            std::size_t other_count = 0;
            for (const auto& [m2, mu] : centroids) {
                if (m2 == m) continue;
                other_sum += half_cosine_distance(self->second, mu);
                ++other_count;
            }
            if (other_count == 0) continue;
            class_sum += other_sum / static_cast<double>(other_count);
            ++class_count;
        }
        if (!domain_seen) {
            throw DataError(strf("per-domain weights: domain ", m,
                                 " has no features"));
        }
        if (class_count == 0) {
            throw DataError(strf("per-domain weights: domain ", m,
                                 " shares no class with another domain"));
        }
        out[m] = class_sum / static_cast<double>(class_count);
    }
    return out;
}

std::map<std::size_t, Weights> per_domain_weights(std::span<const FeaturePoint> features,
                                                  std::size_t t,
                                                  const SchedulerConfig& cfg,
                                                  std::span<const std::size_t> domains) {
    std::map<std::size_t, Weights> out;
    for (const auto& [m, d_m] : per_domain_distance(features, domains)) {
        out[m] = compute_weights(compute_lambda(d_m, t, cfg.total_iters, cfg.theta));
    }
    return out;
}

ScheduleState::ScheduleState(StrategyKind kind, SchedulerConfig cfg)
    : kind_(kind), cfg_(cfg) {
    if (cfg_.total_iters == 0) {
        throw UsageError("schedule: total_iters must be positive");
    }
    if (cfg_.checkpoint_every == 0) {
        throw UsageError("schedule: checkpoint_every must be positive");
    }
}

void ScheduleState::on_checkpoint(std::size_t t, double d) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
        throw NumericError(strf("schedule: invalid distance ", d));
    }
    d_ = d;
    if (cfg_.theta <= 0.0) {
        // First measurement calibrates theta so the log argument starts at 1
        // (lambda ~ 0, all weight on the invariance term).
        cfg_.theta = std::max(d, kLambdaEps) * static_cast<double>(cfg_.total_iters);
    }
    Weights w = weights_at(t);
    history_.push_back({t, d_, lambda_, w.w_v, w.w_s});
}

Weights ScheduleState::weights_at(std::size_t t) {
    t_ = t;
    weights_ = strategy_weights(kind_, t, cfg_, d_);
    lambda_ = kind_ == StrategyKind::transitive
                  ? compute_lambda(d_, t, cfg_.total_iters, cfg_.theta)
                  : (weights_.w_v > 0.0 ? weights_.w_s / weights_.w_v : lambda_max());
    return weights_;
}

void ScheduleState::write_history_csv(std::ostream& os) const {
    os << "t,d,lambda,w_V,w_S\n";
    for (const ScheduleRecord& r : history_) {
        os << r.t << ',' << g17(r.d) << ',' << g17(r.lambda) << ',' << g17(r.w_v) << ','
           << g17(r.w_s) << '\n';
    }
}

}  // namespace tpl
