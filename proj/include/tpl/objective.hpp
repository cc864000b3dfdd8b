// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contrastive objectives: L_V scores each image against the domain-agnostic
// class features, L_S against the class features of the sample's own domain.
// Both are sums of per-sample cross-entropies over cosine similarities / tau,
// accumulated in batch order (so equal text sets make the two losses
// bit-identical).

#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "tpl/graph.hpp"

namespace tpl {

// Per-batch inputs. Feature nodes are 1 x d_j and already L2-normalized;
// labels are 1-based class ids; domains are 1-based domain ids.
struct LossBatch {
    std::vector<NodeId> image_features;                     // fused I'_i
    std::vector<std::size_t> labels;                        // y_i in [1..C]
    std::vector<std::size_t> domains;                       // m_i
    std::vector<NodeId> text_agnostic;                      // T'_1..T'_C
    std::map<std::size_t, std::vector<NodeId>> text_domain; // m -> T-bar'^m_1..C
    double tau = 0.07;
};

// Sum over samples of -log softmax_y(sim(I'_i, T'_j) / tau).
NodeId loss_lv(Graph& g, const LossBatch& batch);

// Same form, each sample scored against its own domain's text features.
NodeId loss_ls(Graph& g, const LossBatch& batch);

// w_v * lv + w_s * ls; weights must be non-negative.
NodeId total_loss(Graph& g, NodeId lv, NodeId ls, double w_v, double w_s);

}  // namespace tpl
