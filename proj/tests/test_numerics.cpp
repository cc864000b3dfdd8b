// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor/graph op semantics, gradient fidelity against central finite
// differences, optimizer arithmetic, and determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "fd_check.hpp"
#include "tpl/graph.hpp"
#include "tpl/optim.hpp"
#include "tpl/tensor.hpp"

using tpl::Graph;
using tpl::NodeId;
using tpl::Rng;
using tpl::Tensor;
using tpltest::max_rel_err;
using tpltest::rand_tensor;
using tpltest::weigh;

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), tpl::ShapeError);
    CHECK_THROWS_AS(Tensor({0}, {}), tpl::ShapeError);
    CHECK_THROWS_AS(Tensor({}, {}), tpl::ShapeError);
    Tensor r = Tensor::row({1.0, 2.0, 3.0});
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 3);
    Tensor v({3}, {1.0, 2.0, 3.0});
    CHECK(v.rows() == 1);  // rank-1 reads as a single row
    CHECK(v.cols() == 3);
    CHECK(Tensor::zeros({2, 2}).numel() == 4);
    CHECK(Tensor::full({2}, 7.0).values[1] == 7.0);
}

TEST_CASE("softmax of uniform logits is uniform") {
    Graph g;
    NodeId y = g.softmax_rows(g.constant(Tensor::row({0.0, 0.0, 0.0})));
    for (double v : g.value(y).values) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("L2 normalize of a 3-4-5 triangle") {
    Graph g;
    NodeId y = g.l2_normalize_rows(g.constant(Tensor::row({3.0, 4.0})));
    CHECK(g.value(y).values[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(g.value(y).values[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("matmul with identity is a no-op") {
    Graph g;
    Tensor a = Tensor::matrix(2, 2, {1.0, 2.0, 3.0, 4.0});
    Tensor eye = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    NodeId y = g.matmul(g.constant(a), g.constant(eye));
    CHECK(g.value(y).values == a.values);
}

TEST_CASE("matmul transpose flags") {
    Graph g;
    // A (2x3), B (2x3): A * B^T is (2x2).
    Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::matrix(2, 3, {1, 0, 1, 0, 1, 0});
    NodeId y = g.matmul(g.constant(a), g.constant(b), false, true);
    CHECK(g.value(y).shape == std::vector<std::size_t>{2, 2});
    CHECK(g.value(y).values[0] == 4.0);   // 1+3
    CHECK(g.value(y).values[1] == 2.0);   // 2
    CHECK(g.value(y).values[2] == 10.0);  // 4+6
    CHECK(g.value(y).values[3] == 5.0);   // 5
    NodeId z = g.matmul(g.constant(a), g.constant(a), true, false);  // (3x3)
    CHECK(g.value(z).shape == std::vector<std::size_t>{3, 3});
    CHECK(g.value(z).values[0] == 17.0);  // 1*1+4*4
}

TEST_CASE("gelu at reference points") {
    Graph g;
    NodeId y = g.gelu(g.constant(Tensor::row({0.0, 1.0, -1.0})));
    CHECK(g.value(y).values[0] == 0.0);
    CHECK(g.value(y).values[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(g.value(y).values[2] == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("cosine similarity reference values") {
    Graph g;
    NodeId c1 = g.cosine_similarity(g.constant(Tensor::row({1.0, 0.0})),
                                    g.constant(Tensor::row({0.0, 1.0})));
    CHECK(g.value(c1).values[0] == doctest::Approx(0.0).epsilon(1e-15));
    NodeId c2 = g.cosine_similarity(g.constant(Tensor::row({1.0, 2.0})),
                                    g.constant(Tensor::row({2.0, 4.0})));
    CHECK(g.value(c2).values[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("concat and slice round-trip") {
    Graph g;
    NodeId a = g.constant(Tensor::matrix(1, 2, {1, 2}));
    NodeId b = g.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
    const NodeId parts[] = {a, b};
    NodeId cat = g.concat_rows(parts);
    CHECK(g.value(cat).shape == std::vector<std::size_t>{3, 2});
    NodeId back = g.slice_rows(cat, 1, 3);
    CHECK(g.value(back).values == g.value(b).values);

    NodeId catc = g.concat_cols(std::vector<NodeId>{b, b});
    CHECK(g.value(catc).shape == std::vector<std::size_t>{2, 4});
    CHECK(g.value(catc).values == std::vector<double>{3, 4, 3, 4, 5, 6, 5, 6});
    NodeId backc = g.slice_cols(catc, 2, 4);
    CHECK(g.value(backc).values == g.value(b).values);
}

TEST_CASE("mean over both axes") {
    Graph g;
    NodeId a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    NodeId m0 = g.mean_axis(a, 0);
    CHECK(g.value(m0).values == std::vector<double>{2.5, 3.5, 4.5});
    NodeId m1 = g.mean_axis(a, 1);
    CHECK(g.value(m1).values == std::vector<double>{2.0, 5.0});
}

TEST_CASE("gather rows copies and repeats") {
    Graph g;
    NodeId t = g.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
    NodeId y = g.gather_rows(t, {2, 0, 2});
    CHECK(g.value(y).values == std::vector<double>{5, 6, 1, 2, 5, 6});
    CHECK_THROWS_AS(g.gather_rows(t, {3}), tpl::ShapeError);
}

TEST_CASE("layer norm matches a direct computation") {
    Rng rng(5);
    Tensor x = rand_tensor({3, 8}, rng);
    Tensor gain = rand_tensor({8}, rng);
    Tensor bias = rand_tensor({8}, rng);
    Graph g;
    NodeId y = g.layer_norm(g.constant(x), g.constant(gain), g.constant(bias));
    const double eps = 1e-5;
    for (std::size_t r = 0; r < 3; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < 8; ++c) mean += x.at(r, c);
        mean /= 8.0;
        double var = 0.0;
        for (std::size_t c = 0; c < 8; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
        var /= 8.0;
        for (std::size_t c = 0; c < 8; ++c) {
            const double expect =
                (x.at(r, c) - mean) / std::sqrt(var + eps) * gain.values[c] + bias.values[c];
            CHECK(g.value(y).at(r, c) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("backward of sum is all-ones") {
    Graph g;
    Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
    x.requires_grad = true;
    NodeId xi = g.leaf(x);
    g.backward(g.sum(xi));
    CHECK(g.grad(xi) == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("backward of dot(x, x) is 2x") {
    Graph g;
    Tensor x = Tensor::row({1.5, -2.0, 0.5});
    x.requires_grad = true;
    NodeId xi = g.leaf(x);
    g.backward(g.sum(g.mul(xi, xi)));
    CHECK(g.grad(xi) == std::vector<double>{3.0, -4.0, 1.0});
}

TEST_CASE("unused requires-grad leaf gets a zero gradient") {
    Graph g;
    Tensor x = Tensor::row({1.0});
    x.requires_grad = true;
    Tensor z = Tensor::row({2.0, 3.0});
    z.requires_grad = true;
    NodeId xi = g.leaf(x);
    NodeId zi = g.leaf(z);
    g.backward(g.sum(xi));
    CHECK(g.grad(zi) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("finite differences across the whole op set") {
    Rng rng(42);

    SUBCASE("matmul all transpose combos") {
        for (int ta = 0; ta < 2; ++ta) {
            for (int tb = 0; tb < 2; ++tb) {
                Tensor A = rand_tensor(ta ? std::vector<std::size_t>{4, 3}
                                          : std::vector<std::size_t>{3, 4},
                                       rng);
                Tensor B = rand_tensor(tb ? std::vector<std::size_t>{2, 4}
                                          : std::vector<std::size_t>{4, 2},
                                       rng);
                auto build = [ta, tb](Graph& g, const std::vector<NodeId>& in) {
                    return weigh(g, g.matmul(in[0], in[1], ta != 0, tb != 0));
                };
                CHECK(max_rel_err(build, {A, B}) < 1e-4);
            }
        }
    }
    SUBCASE("add, mul, scale, broadcast") {
        Tensor A = rand_tensor({3, 4}, rng);
        Tensor B = rand_tensor({3, 4}, rng);
        Tensor R = rand_tensor({1, 4}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.add(in[0], in[1]));
              },
                          {A, B}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.mul(in[0], in[1]));
              },
                          {A, B}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.scale(in[0], -1.7));
              },
                          {A}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.add_row_broadcast(in[0], in[1]));
              },
                          {A, R}) < 1e-4);
    }
    SUBCASE("concat and slice") {
        Tensor A = rand_tensor({2, 3}, rng);
        Tensor B = rand_tensor({3, 3}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.concat_rows(in));
              },
                          {A, B}) < 1e-4);
        Tensor C = rand_tensor({2, 2}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.concat_cols(in));
              },
                          {A, C}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.slice_rows(in[0], 1, 3));
              },
                          {B}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.slice_cols(in[0], 1, 2));
              },
                          {B}) < 1e-4);
    }
    SUBCASE("mean, reshape, gather") {
        Tensor A = rand_tensor({3, 4}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.mean_axis(in[0], 0));
              },
                          {A}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.mean_axis(in[0], 1));
              },
                          {A}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.reshape(in[0], {4, 3}));
              },
                          {A}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.gather_rows(in[0], {0, 2, 2, 1}));
              },
                          {A}) < 1e-4);
    }
    SUBCASE("layer norm, gelu, softmax, l2norm") {
        Tensor X = rand_tensor({3, 6}, rng);
        Tensor Gn = rand_tensor({6}, rng);
        Tensor Bs = rand_tensor({6}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.layer_norm(in[0], in[1], in[2]));
              },
                          {X, Gn, Bs}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.gelu(in[0]));
              },
                          {X}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.softmax_rows(in[0]));
              },
                          {X}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.l2_normalize_rows(in[0]));
              },
                          {X}) < 1e-4);
    }
    SUBCASE("cosine, log, exp") {
        Tensor a = rand_tensor({5}, rng);
        Tensor b = rand_tensor({5}, rng);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return g.cosine_similarity(in[0], in[1]);
              },
                          {a, b}) < 1e-4);
        Tensor pos = Tensor::row({0.3, 1.2, 2.5, 0.8});
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.log(in[0]));
              },
                          {pos}) < 1e-4);
        CHECK(max_rel_err([](Graph& g, const std::vector<NodeId>& in) {
                  return weigh(g, g.exp(in[0]));
              },
                          {a}) < 1e-4);
    }
    SUBCASE("composite expression") {
        // Softmax cross-entropy-ish pipeline touching most op kinds at once.
        Tensor X = rand_tensor({4, 6}, rng);
        Tensor W = rand_tensor({6, 3}, rng);
        Tensor Gn = Tensor::full({6}, 1.0);
        Tensor Bs = Tensor::zeros({6});
        auto build = [](Graph& g, const std::vector<NodeId>& in) {
            NodeId h = g.layer_norm(in[0], in[2], in[3]);
            NodeId logits = g.matmul(g.gelu(h), in[1]);
            NodeId p = g.softmax_rows(g.scale(logits, 1.0 / 0.07));
            return g.scale(g.sum(g.log(p)), -1.0);
        };
        CHECK(max_rel_err(build, {X, W, Gn, Bs}) < 1e-4);
    }
}

TEST_CASE("softmax and L2 invariants on random tensors") {
    Rng rng(7);
    Tensor X = rand_tensor({17, 9}, rng, 4.0);
    Graph g;
    NodeId sm = g.softmax_rows(g.constant(X));
    for (std::size_t r = 0; r < 17; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 9; ++c) s += g.value(sm).at(r, c);
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    NodeId l2 = g.l2_normalize_rows(g.constant(X));
    for (std::size_t r = 0; r < 17; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 9; ++c) s += g.value(l2).at(r, c) * g.value(l2).at(r, c);
        CHECK(std::abs(std::sqrt(s) - 1.0) <= 1e-12);
    }
}

TEST_CASE("graph error paths") {
    Graph g;
    NodeId a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    NodeId b = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    try {
        g.matmul(a, b);
        FAIL("expected shape error");
    } catch (const tpl::ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[2, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(g.add(a, b), tpl::ShapeError);
    Tensor bad = Tensor::row({1.0});
    bad.values[0] = std::nan("");
    CHECK_THROWS_AS(g.leaf(bad), tpl::NumericError);
    CHECK_THROWS_AS(g.log(g.constant(Tensor::row({-1.0}))), tpl::NumericError);
    CHECK_THROWS_AS(g.l2_normalize_rows(g.constant(Tensor::row({0.0, 0.0}))),
                    tpl::NumericError);

    CHECK_THROWS_AS(g.backward(a), tpl::ShapeError);  // non-scalar loss
    NodeId s = g.sum(a);
    g.backward(s);
    CHECK_THROWS_AS(g.backward(s), tpl::Error);  // backward may run once
    CHECK_THROWS_AS(g.sum(a), tpl::Error);       // tape consumed
    CHECK_THROWS_AS(g.grad(a), tpl::Error);      // constant holds no grad
}

TEST_CASE("adamw reference arithmetic") {
    SUBCASE("zero grad, zero decay: unchanged") {
        Tensor p = Tensor::row({1.5});
        p.grad = std::vector<double>{0.0};
        auto st = tpl::AdamWState::for_param(p);
        tpl::AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.0;
        tpl::adamw_step(p, st, cfg);
        CHECK(p.values[0] == 1.5);
        CHECK(st.t == 1);
    }
    SUBCASE("zero grad, decay w: scaled by (1 - lr*w)") {
        Tensor p = Tensor::row({2.0});
        p.grad = std::vector<double>{0.0};
        auto st = tpl::AdamWState::for_param(p);
        tpl::AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.5;
        tpl::adamw_step(p, st, cfg);
        CHECK(p.values[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
    }
    SUBCASE("unit grad first step moves by ~lr") {
        Tensor p = Tensor::row({1.0});
        p.grad = std::vector<double>{1.0};
        auto st = tpl::AdamWState::for_param(p);
        tpl::AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.0;
        tpl::adamw_step(p, st, cfg);
        CHECK(p.values[0] == doctest::Approx(0.9).epsilon(1e-7));
    }
    SUBCASE("missing grad is an error") {
        Tensor p = Tensor::row({1.0});
        auto st = tpl::AdamWState::for_param(p);
        tpl::AdamWConfig cfg;
        CHECK_THROWS_AS(tpl::adamw_step(p, st, cfg), tpl::Error);
    }
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(tpl::cosine_lr(0, 100, 3e-5, 0.0) == doctest::Approx(3e-5).epsilon(1e-15));
    CHECK(tpl::cosine_lr(100, 100, 3e-5, 1e-6) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(tpl::cosine_lr(50, 100, 3e-5, 0.0) == doctest::Approx(1.5e-5).epsilon(1e-12));
    CHECK_THROWS_AS(tpl::cosine_lr(101, 100, 3e-5, 0.0), tpl::Error);
    CHECK_THROWS_AS(tpl::cosine_lr(0, 0, 3e-5, 0.0), tpl::Error);
}

TEST_CASE("same seed gives bit-identical values and gradients") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor X = Tensor::randn({4, 5}, rng, 0.5);
        Tensor W = Tensor::randn({5, 3}, rng, 0.5);
        X.requires_grad = true;
        W.requires_grad = true;
        Graph g;
        NodeId xi = g.leaf(X), wi = g.leaf(W);
        NodeId loss = g.sum(g.softmax_rows(g.matmul(g.gelu(xi), wi)));
        g.backward(loss);
        std::vector<double> out = g.value(loss).values;
        const auto& gx = g.grad(xi);
        const auto& gw = g.grad(wi);
        out.insert(out.end(), gx.begin(), gx.end());
        out.insert(out.end(), gw.begin(), gw.end());
        return out;
    };
    const auto a = run(123), b = run(123), c = run(124);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    CHECK(a != c);
}

TEST_CASE("rng streams are deterministic and forkable") {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng base(9);
    Rng f1 = base.fork(1, 2), f2 = base.fork(1, 2), f3 = base.fork(2, 1);
    CHECK(f1.next() == f2.next());
    CHECK(f1.next() != f3.next());
    Rng u(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(u.uniform_int(10) < 10);
    }
}
