// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Prompt generator semantics (mean-of-G, permutation invariance) and the
// adaptive fusion algebra with gates P, Q, R.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "tpl/prompting.hpp"

using tpl::Bound;
using tpl::DomainPromptGenerator;
using tpl::FusionGates;
using tpl::Graph;
using tpl::ModelConfig;
using tpl::NodeId;
using tpl::Rng;
using tpl::Tensor;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.patch_size = 8;
    cfg.d_e = 4;
    cfg.vision_layers = 1;
    cfg.heads = 1;
    cfg.text_layers = 1;
    cfg.d_j = 6;
    cfg.prompt_len = 1;
    cfg.text_prompt_len = 2;
    cfg.classes = 2;
    cfg.gen_hidden = 8;
    return cfg;
}

NodeId unit_row(Graph& g, std::vector<double> v) {
    return g.l2_normalize_rows(g.constant(Tensor::row(std::move(v))));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace

TEST_CASE("generator: mean of one, duplicates, and genuine averaging") {
    ModelConfig cfg = small_config();
    DomainPromptGenerator gen = DomainPromptGenerator::init(cfg, 31);
    // The output layer initializes to zero; give it generic weights so the
    // checks below exercise a full nonlinear MLP.
    Rng wr(3);
    gen.w3 = tpltest::rand_tensor({cfg.gen_hidden, cfg.text_prompt_len * cfg.d_e}, wr);
    Graph g;
    Bound b = tpl::bind_params(g, gen.params());
    Rng rng(4);
    NodeId f1 = g.constant(tpltest::rand_tensor({1, cfg.d_j}, rng));
    NodeId f2 = g.constant(tpltest::rand_tensor({1, cfg.d_j}, rng));

    const NodeId one[] = {f1};
    NodeId v_one = gen.generate(g, b, one);
    CHECK(g.value(v_one).shape == std::vector<std::size_t>{cfg.text_prompt_len, cfg.d_e});
    NodeId direct = g.reshape(gen.forward_rows(g, b, f1), {cfg.text_prompt_len, cfg.d_e});
    CHECK(g.value(v_one).values == g.value(direct).values);

    // Duplicating the list does not move the mean: (x + x) / 2 == x exactly.
    const NodeId dup[] = {f1, f1};
    CHECK(g.value(gen.generate(g, b, dup)).values == g.value(v_one).values);

    // Mean of G over two distinct features...
    const NodeId two[] = {f1, f2};
    NodeId v_two = gen.generate(g, b, two);
    std::vector<double> manual(g.value(v_two).numel());
    {
        NodeId g1 = gen.forward_rows(g, b, f1);
        NodeId g2 = gen.forward_rows(g, b, f2);
        for (std::size_t i = 0; i < manual.size(); ++i) {
            manual[i] = 0.5 * (g.value(g1).values[i] + g.value(g2).values[i]);
        }
        CHECK(max_abs_diff(g.value(v_two).values, manual) <= 1e-12);
    }
    // ...is not G of the mean feature.
    NodeId mean_feat = g.scale(g.add(f1, f2), 0.5);
    NodeId g_of_mean = gen.forward_rows(g, b, mean_feat);
    CHECK(max_abs_diff(g.value(v_two).values, g.value(g_of_mean).values) > 1e-6);

    // Permutation invariance of the feature list.
    const NodeId swapped[] = {f2, f1};
    CHECK(max_abs_diff(g.value(gen.generate(g, b, swapped)).values,
                       g.value(v_two).values) <= 1e-12);

    CHECK_THROWS_AS(gen.generate(g, b, std::span<const NodeId>{}), tpl::ShapeError);
    NodeId bad = g.constant(Tensor::row({1.0, 2.0}));
    CHECK_THROWS_AS(gen.forward_rows(g, b, bad), tpl::ShapeError);
}

TEST_CASE("fusion gate algebra") {
    Graph g;
    NodeId zero2 = g.constant(Tensor::row({0.0, 0.0}));
    NodeId ones2 = g.constant(Tensor::row({1.0, 1.0}));

    SUBCASE("zero image gate is the identity on unit features") {
        Rng rng(8);
        NodeId i = unit_row(g, {0.3, -1.2, 0.7});
        NodeId i_orig = unit_row(g, {1.0, 0.25, -0.5});
        NodeId zero3 = g.constant(Tensor::row({0.0, 0.0, 0.0}));
        NodeId fused = tpl::fuse_image(g, i, i_orig, zero3);
        CHECK(max_abs_diff(g.value(fused).values, g.value(i).values) <= 1e-12);
        (void)rng;
    }
    SUBCASE("all-ones image gate adds the original feature before normalization") {
        NodeId i = unit_row(g, {1.0, 0.0});
        NodeId i_orig = unit_row(g, {0.0, 1.0});
        NodeId fused = tpl::fuse_image(g, i, i_orig, ones2);
        const double inv = 1.0 / std::sqrt(2.0);
        CHECK(g.value(fused).values[0] == doctest::Approx(inv).epsilon(1e-12));
        CHECK(g.value(fused).values[1] == doctest::Approx(inv).epsilon(1e-12));
    }
    SUBCASE("half gate mixes elementwise") {
        NodeId i = g.constant(Tensor::row({1.0, 0.0}));
        NodeId i_orig = g.constant(Tensor::row({0.0, 1.0}));
        NodeId half = g.constant(Tensor::row({0.5, 0.5}));
        NodeId fused = tpl::fuse_image(g, i, i_orig, half);
        // pre-normalization (1, 0.5), then / sqrt(1.25)
        const double n = std::sqrt(1.25);
        CHECK(g.value(fused).values[0] == doctest::Approx(1.0 / n).epsilon(1e-12));
        CHECK(g.value(fused).values[1] == doctest::Approx(0.5 / n).epsilon(1e-12));
    }
    SUBCASE("zero text gates leave both streams unchanged") {
        NodeId tbar = unit_row(g, {0.6, -0.8});
        NodeId t = unit_row(g, {0.8, 0.6});
        auto [tb2, t2] = tpl::fuse_text(g, tbar, t, zero2, zero2);
        CHECK(max_abs_diff(g.value(tb2).values, g.value(tbar).values) <= 1e-12);
        CHECK(max_abs_diff(g.value(t2).values, g.value(t).values) <= 1e-12);
    }
    SUBCASE("identical streams with unit gates collapse to the stream") {
        NodeId t = unit_row(g, {0.28, -0.96});
        auto [tb2, t2] = tpl::fuse_text(g, t, t, ones2, ones2);
        CHECK(max_abs_diff(g.value(tb2).values, g.value(t).values) <= 1e-12);
        CHECK(max_abs_diff(g.value(t2).values, g.value(t).values) <= 1e-12);
    }
    SUBCASE("orthogonal streams with unit gates give the diagonal, pre-fusion inputs only") {
        NodeId tbar = g.constant(Tensor::row({1.0, 0.0}));
        NodeId t = g.constant(Tensor::row({0.0, 1.0}));
        auto [tb2, t2] = tpl::fuse_text(g, tbar, t, ones2, ones2);
        const double inv = 1.0 / std::sqrt(2.0);  // (1,1) normalized
        CHECK(g.value(tb2).values[0] == doctest::Approx(inv).epsilon(1e-12));
        CHECK(g.value(tb2).values[1] == doctest::Approx(inv).epsilon(1e-12));
        CHECK(g.value(t2).values[0] == doctest::Approx(inv).epsilon(1e-12));
        CHECK(g.value(t2).values[1] == doctest::Approx(inv).epsilon(1e-12));
    }
    SUBCASE("dimension mismatches are rejected") {
        NodeId a = g.constant(Tensor::row({1.0, 2.0}));
        NodeId c = g.constant(Tensor::row({1.0, 2.0, 3.0}));
        CHECK_THROWS_AS(tpl::fuse_image(g, a, c, ones2), tpl::ShapeError);
        CHECK_THROWS_AS(tpl::fuse_image(g, a, a, c), tpl::ShapeError);
        CHECK_THROWS_AS(tpl::fuse_text(g, a, c, ones2, ones2), tpl::ShapeError);
    }
}

TEST_CASE("gates initialize to 0.1 in every slot") {
    ModelConfig cfg = small_config();
    FusionGates gates = FusionGates::init(cfg);
    for (const auto& t : {gates.p, gates.q, gates.r}) {
        CHECK(t.shape == std::vector<std::size_t>{1, cfg.d_j});
        for (double v : t.values) CHECK(v == 0.1);
    }
}

TEST_CASE("gradients are exact through generator and fusion") {
    ModelConfig cfg = small_config();
    DomainPromptGenerator gen = DomainPromptGenerator::init(cfg, 5);
    Rng rng(6);
    // Generic (nonzero) output layer so every weight sits on an active path.
    gen.w3 = tpltest::rand_tensor({cfg.gen_hidden, cfg.text_prompt_len * cfg.d_e}, rng);
    Tensor f1 = tpltest::rand_tensor({1, cfg.d_j}, rng);
    Tensor f2 = tpltest::rand_tensor({1, cfg.d_j}, rng);
    Tensor w1 = gen.w1, b1 = gen.b1, w2 = gen.w2, b2 = gen.b2, w3 = gen.w3, b3 = gen.b3;

    auto build = [&](Graph& g, const std::vector<NodeId>& in) {
        DomainPromptGenerator local = gen;  // same dims; weights come from leaves
        Bound b;
        b.put("gen.w1", in[0]);
        b.put("gen.b1", in[1]);
        b.put("gen.w2", in[2]);
        b.put("gen.b2", in[3]);
        b.put("gen.w3", in[4]);
        b.put("gen.b3", in[5]);
        const NodeId feats[] = {in[6], in[7]};
        NodeId vm = local.generate(g, b, feats);
        NodeId flat = g.reshape(vm, {1, cfg.text_prompt_len * cfg.d_e});
        NodeId gate = g.slice_cols(flat, 0, cfg.d_j);
        NodeId fused = tpl::fuse_image(g, g.l2_normalize_rows(in[6]),
                                       g.l2_normalize_rows(in[7]), gate);
        return tpltest::weigh(g, fused, 23);
    };
    CHECK(tpltest::max_rel_err(build, {w1, b1, w2, b2, w3, b3, f1, f2}) < 1e-4);
}

TEST_CASE("generator weights receive gradient through v^m") {
    ModelConfig cfg = small_config();
    Rng rng(10);
    Tensor feat = tpltest::rand_tensor({1, cfg.d_j}, rng);

    auto grad_mass = [&](DomainPromptGenerator& gen, const char* name) {
        auto params = gen.params();
        tpl::set_requires_grad(params, "generator", true);
        Graph g;
        Bound b = tpl::bind_params(g, params);
        const NodeId feats[] = {g.constant(feat)};
        g.backward(tpltest::weigh(g, gen.generate(g, b, feats), 29));
        double total = 0.0;
        for (double v : g.grad(b.id(name))) total += std::abs(v);
        return total;
    };

    // Fresh init: the zero output layer is not a trap — its own gradient is
    // already nonzero, so training moves it off zero immediately.
    DomainPromptGenerator gen = DomainPromptGenerator::init(cfg, 9);
    CHECK(grad_mass(gen, "gen.w3") > 0.0);

    // Once the output layer is nonzero, gradient reaches the first layer too.
    gen.w3 = tpltest::rand_tensor({cfg.gen_hidden, cfg.text_prompt_len * cfg.d_e}, rng);
    CHECK(grad_mass(gen, "gen.w1") > 0.0);
}
