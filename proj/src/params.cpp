// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/params.hpp"

namespace tpl {

Bound bind_params(Graph& g, const std::vector<ParamRef>& params) {
    Bound b;
    for (const ParamRef& p : params) {
        Tensor copy = *p.tensor;
        copy.grad.reset();
        b.put(p.name, g.leaf(std::move(copy)));
    }
    return b;
}

void harvest_grads(const Graph& g, const Bound& b, const std::vector<ParamRef>& params) {
    for (const ParamRef& p : params) {
        if (!p.tensor->requires_grad) continue;
        p.tensor->grad = g.grad(b.id(p.name));
    }
}

void set_requires_grad(const std::vector<ParamRef>& params, const std::string& role, bool on) {
    for (const ParamRef& p : params) {
        if (p.role == role) p.tensor->requires_grad = on;
    }
}

void set_requires_grad_all(const std::vector<ParamRef>& params, bool on) {
    for (const ParamRef& p : params) p.tensor->requires_grad = on;
}

}  // namespace tpl
