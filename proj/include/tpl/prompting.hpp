// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Domain-specific language-prompt generation (the three-layer MLP G mapping
// image features to v^m token blocks) and adaptive fusion with learnable
// gates P, Q, R.

#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tpl/encoders.hpp"
#include "tpl/graph.hpp"
#include "tpl/params.hpp"

namespace tpl {

// G: d_j -> hidden -> hidden -> L_v * d_e, GELU between affine layers.
struct DomainPromptGenerator {
    std::size_t d_j = 0, hidden = 0, l_v = 0, d_e = 0;
    Tensor w1, b1, w2, b2, w3, b3;

    static DomainPromptGenerator init(const ModelConfig& cfg, std::uint64_t seed);
    std::vector<ParamRef> params();

    // Rows of image features (N x d_j) -> rows of flat prompts (N x L_v*d_e).
    NodeId forward_rows(Graph& g, const Bound& b, NodeId features) const;

    // v^m = (1/N) sum_i G(I_i), reshaped to L_v tokens of width d_e.
    NodeId generate(Graph& g, const Bound& b, std::span<const NodeId> features) const;
};

// Learnable fusion vectors, one per fused stream (Eq. 8-10 roles).
struct FusionGates {
    Tensor p, q, r;  // each 1 x d_j

    static FusionGates init(const ModelConfig& cfg, double initial = 0.1);
    std::vector<ParamRef> params();
};

// I' = L2normalize(I + P o I_orig); all arguments 1 x d_j nodes.
NodeId fuse_image(Graph& g, NodeId i, NodeId i_orig, NodeId gate_p);

// (T-bar', T') = (L2normalize(T-bar + Q o T), L2normalize(T + R o T-bar)),
// both computed from the pre-fusion inputs.
std::pair<NodeId, NodeId> fuse_text(Graph& g, NodeId t_bar, NodeId t, NodeId gate_q,
                                    NodeId gate_r);

}  // namespace tpl
