// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay, and a cosine learning-rate schedule.

#pragma once

#include <cstddef>
#include <vector>

#include "tpl/tensor.hpp"

namespace tpl {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Per-parameter moment buffers. `t` counts completed steps.
struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;

    static AdamWState for_param(const Tensor& p) {
        AdamWState s;
        s.m.assign(p.numel(), 0.0);
        s.v.assign(p.numel(), 0.0);
        return s;
    }
};

// One bias-corrected update in place. Requires param.grad to be populated;
// decay is decoupled from the gradient term.
void adamw_step(Tensor& param, AdamWState& state, const AdamWConfig& cfg);

// Cosine decay from `base` at t = 0 to `lr_floor` at t = total. Valid for
// 0 <= t <= total with total > 0.
double cosine_lr(std::size_t t, std::size_t total, double base, double lr_floor);

// Linear ramp to `base` over the first `warmup` steps (reaching it at
// t = warmup), then cosine decay over the remaining steps. warmup < total;
// warmup = 0 is plain cosine decay.
double warmup_cosine_lr(std::size_t t, std::size_t total, std::size_t warmup, double base,
                        double lr_floor);

}  // namespace tpl
