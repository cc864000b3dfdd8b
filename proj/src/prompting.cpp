// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/prompting.hpp"

#include <cmath>

namespace tpl {

DomainPromptGenerator DomainPromptGenerator::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    DomainPromptGenerator gen;
    gen.d_j = cfg.d_j;
    gen.hidden = cfg.gen_hidden;
    gen.l_v = cfg.text_prompt_len;
    gen.d_e = cfg.d_e;
    const std::size_t out = gen.l_v * gen.d_e;
    gen.w1 = Tensor::randn({gen.d_j, gen.hidden}, rng,
                           1.0 / std::sqrt(static_cast<double>(gen.d_j)));
    gen.b1 = Tensor::zeros({gen.hidden});
    gen.w2 = Tensor::randn({gen.hidden, gen.hidden}, rng,
                           1.0 / std::sqrt(static_cast<double>(gen.hidden)));
    gen.b2 = Tensor::zeros({gen.hidden});
    // The output layer starts at zero so generated prompts begin as a
    // neutral block and grow only as G learns; early training then never
    // scrambles the text encoder with large random prompt tokens.
    gen.w3 = Tensor::zeros({gen.hidden, out});
    gen.b3 = Tensor::zeros({out});
    return gen;
}

std::vector<ParamRef> DomainPromptGenerator::params() {
    return {{"gen.w1", &w1, "generator"}, {"gen.b1", &b1, "generator"},
            {"gen.w2", &w2, "generator"}, {"gen.b2", &b2, "generator"},
            {"gen.w3", &w3, "generator"}, {"gen.b3", &b3, "generator"}};
}

NodeId DomainPromptGenerator::forward_rows(Graph& g, const Bound& b, NodeId features) const {
    const Tensor& f = g.value(features);
    if (f.cols() != d_j) {
        throw ShapeError(strf("prompt generator: features ", f.shape_str(), ", expected [*, ",
                              d_j, "]"));
    }
    NodeId h = g.gelu(g.add_row_broadcast(g.matmul(features, b.id("gen.w1")), b.id("gen.b1")));
    h = g.gelu(g.add_row_broadcast(g.matmul(h, b.id("gen.w2")), b.id("gen.b2")));
    return g.add_row_broadcast(g.matmul(h, b.id("gen.w3")), b.id("gen.b3"));
}

NodeId DomainPromptGenerator::generate(Graph& g, const Bound& b,
                                       std::span<const NodeId> features) const {
    if (features.empty()) {
        throw ShapeError("generate_domain_prompt: empty feature list");
    }
    NodeId rows = features.size() == 1 ? features[0] : g.concat_rows(features);
    NodeId flat = g.mean_axis(forward_rows(g, b, rows), 0);
    return g.reshape(flat, {l_v, d_e});
}

FusionGates FusionGates::init(const ModelConfig& cfg, double initial) {
    cfg.validate();
    FusionGates gates;
    gates.p = Tensor::full({1, cfg.d_j}, initial);
    gates.q = Tensor::full({1, cfg.d_j}, initial);
    gates.r = Tensor::full({1, cfg.d_j}, initial);
    return gates;
}

std::vector<ParamRef> FusionGates::params() {
    return {{"gate.P", &p, "gate"}, {"gate.Q", &q, "gate"}, {"gate.R", &r, "gate"}};
}

namespace {
void check_fusable(Graph& g, const char* op, NodeId a, NodeId b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.rows() != 1 || tb.rows() != 1 || ta.cols() != tb.cols()) {
        throw ShapeError(strf(op, ": feature/gate shapes ", ta.shape_str(), " vs ",
                              tb.shape_str()));
    }
}
}  // namespace

NodeId fuse_image(Graph& g, NodeId i, NodeId i_orig, NodeId gate_p) {
    check_fusable(g, "fuse_image", i, i_orig);
    check_fusable(g, "fuse_image", i, gate_p);
    return g.l2_normalize_rows(g.add(i, g.mul(gate_p, i_orig)));
}

std::pair<NodeId, NodeId> fuse_text(Graph& g, NodeId t_bar, NodeId t, NodeId gate_q,
                                    NodeId gate_r) {
    check_fusable(g, "fuse_text", t_bar, t);
    check_fusable(g, "fuse_text", t_bar, gate_q);
    check_fusable(g, "fuse_text", t_bar, gate_r);
    NodeId t_bar_fused = g.l2_normalize_rows(g.add(t_bar, g.mul(gate_q, t)));
    NodeId t_fused = g.l2_normalize_rows(g.add(t, g.mul(gate_r, t_bar)));
    return {t_bar_fused, t_fused};
}

}  // namespace tpl
