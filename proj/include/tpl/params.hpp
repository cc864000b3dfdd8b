// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-parameter registry: the bridge between model structs (which own
// Tensors), the autodiff graph (which sees leaves), the optimizer, and
// checkpoint files.

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tpl/graph.hpp"
#include "tpl/tensor.hpp"

namespace tpl {

// Borrowed view of one model parameter. `role` tags the training stage that
// owns it: "backbone", "prompt", "generator", or "gate".
struct ParamRef {
    std::string name;
    Tensor* tensor = nullptr;
    std::string role;
};

// Leaf ids for one model's parameters within one Graph.
class Bound {
public:
    void put(const std::string& name, NodeId id) { ids_.emplace(name, id); }

    NodeId id(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw Error("bound params: unknown parameter " + name);
        return it->second;
    }

    std::size_t size() const { return ids_.size(); }

private:
    std::unordered_map<std::string, NodeId> ids_;
};

// Create one leaf per parameter; requires_grad is taken from each tensor.
Bound bind_params(Graph& g, const std::vector<ParamRef>& params);

// Copy gradients of all requires_grad parameters out of the graph into the
// tensors' grad slots (replacing any previous gradient).
void harvest_grads(const Graph& g, const Bound& b, const std::vector<ParamRef>& params);

void set_requires_grad(const std::vector<ParamRef>& params, const std::string& role, bool on);
void set_requires_grad_all(const std::vector<ParamRef>& params, bool on);

}  // namespace tpl
