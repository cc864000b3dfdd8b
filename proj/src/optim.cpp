// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/optim.hpp"

#include <cmath>

namespace tpl {

void adamw_step(Tensor& param, AdamWState& state, const AdamWConfig& cfg) {
    if (!param.grad) {
        throw Error("adamw_step: parameter has no gradient");
    }
    const std::vector<double>& g = *param.grad;
    if (g.size() != param.numel() || state.m.size() != param.numel() ||
        state.v.size() != param.numel()) {
        throw ShapeError(strf("adamw_step: state/grad size mismatch for parameter ",
                              param.shape_str()));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        const double p = param.values[i];
        param.values[i] = p - cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                                        cfg.weight_decay * p);
        if (!std::isfinite(param.values[i])) {
            throw NumericError("adamw_step: parameter became non-finite");
        }
    }
}

double cosine_lr(std::size_t t, std::size_t total, double base, double lr_floor) {
    if (total == 0) throw Error("cosine_lr: total steps must be positive");
    if (t > total) {
        throw Error(strf("cosine_lr: step ", t, " past end of schedule ", total));
    }
    const double pi = 3.14159265358979323846;
    const double frac = static_cast<double>(t) / static_cast<double>(total);
    return lr_floor + 0.5 * (base - lr_floor) * (1.0 + std::cos(pi * frac));
}

double warmup_cosine_lr(std::size_t t, std::size_t total, std::size_t warmup, double base,
                        double lr_floor) {
    if (warmup >= total) {
        throw Error(strf("warmup_cosine_lr: warmup ", warmup, " must be < total ", total));
    }
    if (t < warmup) {
        return base * static_cast<double>(t + 1) / static_cast<double>(warmup);
    }
    return cosine_lr(t - warmup, total - warmup, base, lr_floor);
}

}  // namespace tpl
