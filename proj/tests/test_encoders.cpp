// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder semantics: shapes, unit norms, determinism, prompt liveness, an
// independent width-2 arithmetic oracle for the full block stack, and
// checkpoint round-trips.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tpl/checkpoint.hpp"
#include "tpl/encoders.hpp"

using tpl::Bound;
using tpl::ClassDescriptor;
using tpl::DualEncoder;
using tpl::Graph;
using tpl::ModelConfig;
using tpl::NodeId;
using tpl::Rng;
using tpl::Tensor;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.patch_size = 8;  // a single patch
    cfg.d_e = 2;
    cfg.vision_layers = 1;
    cfg.heads = 1;
    cfg.text_layers = 1;
    cfg.context = 8;
    cfg.d_j = 2;
    cfg.prompt_len = 1;
    cfg.text_prompt_len = 1;
    cfg.classes = 2;
    cfg.gen_hidden = 4;
    return cfg;
}

Tensor random_image(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Tensor img = Tensor::zeros({cfg.image_size, cfg.image_size, cfg.channels});
    for (double& v : img.values) v = rng.uniform();
    return img;
}

double unit_norm_error(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::abs(std::sqrt(s) - 1.0);
}

// ----- plain-loop reference math for the width-2 oracle -----

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    }
    return m;
}

std::vector<double> ref_affine(const std::vector<double>& x, const Mat& w,
                               const std::vector<double>& b) {
    std::vector<double> y(w[0].size(), 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w[i][j];
        y[j] = acc;
    }
    return y;
}

std::vector<double> ref_layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                   const std::vector<double>& b) {
    const double eps = 1e-5;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
    }
    return y;
}

double ref_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// One pre-LN block with a single attention head, on a list of row vectors.
Mat ref_block(const Mat& x, const tpl::TransformerBlock& blk) {
    const std::size_t n = x.size(), d = x[0].size();
    const Mat wq = to_mat(blk.wq), wk = to_mat(blk.wk), wv = to_mat(blk.wv),
              wo = to_mat(blk.wo), w1 = to_mat(blk.w1), w2 = to_mat(blk.w2);
    Mat h(n), q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        h[i] = ref_layer_norm(x[i], blk.ln1_g.values, blk.ln1_b.values);
        q[i] = ref_affine(h[i], wq, blk.bq.values);
        k[i] = ref_affine(h[i], wk, blk.bk.values);
        v[i] = ref_affine(h[i], wv, blk.bv.values);
    }
    Mat after_attn(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> scores(n, 0.0);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < d; ++c) scores[j] += q[i][c] * k[j][c];
            scores[j] /= std::sqrt(static_cast<double>(d));
            mx = std::max(mx, scores[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            denom += scores[j];
        }
        std::vector<double> mix(d, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < d; ++c) mix[c] += scores[j] / denom * v[j][c];
        }
        std::vector<double> o = ref_affine(mix, wo, blk.bo.values);
        after_attn[i].resize(d);
        for (std::size_t c = 0; c < d; ++c) after_attn[i][c] = x[i][c] + o[c];
    }
    Mat out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> m = ref_layer_norm(after_attn[i], blk.ln2_g.values,
                                               blk.ln2_b.values);
        std::vector<double> m1 = ref_affine(m, w1, blk.b1.values);
        for (double& val : m1) val = ref_gelu(val);
        std::vector<double> m2 = ref_affine(m1, w2, blk.b2.values);
        out[i].resize(d);
        for (std::size_t c = 0; c < d; ++c) out[i][c] = after_attn[i][c] + m2[c];
    }
    return out;
}

}  // namespace

TEST_CASE("default config shape arithmetic") {
    ModelConfig cfg;
    cfg.validate();
    CHECK(cfg.num_patches() == 16);
    CHECK(cfg.patch_dim() == 192);
    CHECK(1 + cfg.num_patches() + cfg.prompt_len == 21);  // per-block sequence length
    CHECK(cfg.vocab_size() == 12);
    CHECK(cfg.descriptor_len() == 5);
}

TEST_CASE("config validation rejects bad dimensionality") {
    ModelConfig cfg;
    cfg.patch_size = 7;
    CHECK_THROWS_AS(cfg.validate(), tpl::UsageError);
    cfg = ModelConfig{};
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), tpl::UsageError);
    cfg = ModelConfig{};
    cfg.context = 5;  // 5 descriptor + 2 prompt tokens will not fit
    CHECK_THROWS_AS(cfg.validate(), tpl::UsageError);
}

TEST_CASE("image features: shape, unit norm, determinism") {
    ModelConfig cfg;
    DualEncoder m = DualEncoder::init(cfg, 11);
    Tensor img = random_image(cfg, 3);
    Graph g;
    Bound b = m.bind(g);
    NodeId i1 = m.encode_image(g, b, img, true);
    NodeId i2 = m.encode_image(g, b, img, true);
    NodeId plain = m.encode_image(g, b, img, false);
    CHECK(g.value(i1).shape == std::vector<std::size_t>{1, cfg.d_j});
    CHECK(unit_norm_error(g.value(i1).values) <= 1e-9);
    CHECK(g.value(i1).values == g.value(i2).values);  // pure function of inputs
    CHECK(g.value(plain).values != g.value(i1).values);  // prompts are live inputs
    CHECK(unit_norm_error(g.value(plain).values) <= 1e-9);

    Tensor bad = Tensor::zeros({16, 16, 3});
    CHECK_THROWS_AS(m.encode_image(g, b, bad, true), tpl::ShapeError);
}

TEST_CASE("text features: per-class matrix, unit norm, position shift") {
    ModelConfig cfg;
    DualEncoder m = DualEncoder::init(cfg, 12);
    Graph g;
    Bound b = m.bind(g);
    auto descs = tpl::make_class_descriptors(cfg);
    REQUIRE(descs.size() == cfg.classes);
    std::vector<std::vector<double>> feats;
    for (const auto& d : descs) {
        NodeId t = m.encode_text(g, b, d);
        CHECK(g.value(t).shape == std::vector<std::size_t>{1, cfg.d_j});
        CHECK(unit_norm_error(g.value(t).values) <= 1e-9);
        feats.push_back(g.value(t).values);
    }
    for (std::size_t i = 1; i < feats.size(); ++i) CHECK(feats[i] != feats[0]);

    // Same descriptor twice -> identical feature.
    NodeId again = m.encode_text(g, b, descs[0]);
    CHECK(g.value(again).values == feats[0]);

    // The prompt slots are reserved in every encoding, so a zero v^m block
    // reproduces the plain encoding bitwise and a nonzero one changes it.
    NodeId zero_vm = g.constant(Tensor::zeros({cfg.text_prompt_len, cfg.d_e}));
    NodeId with_zero = m.encode_text(g, b, descs[0], zero_vm);
    CHECK(g.value(with_zero).values == feats[0]);
    Rng vr(5);
    NodeId real_vm = g.constant(Tensor::randn({cfg.text_prompt_len, cfg.d_e}, vr, 0.5));
    NodeId with_real = m.encode_text(g, b, descs[0], real_vm);
    double diff = 0.0;
    for (std::size_t i = 0; i < cfg.d_j; ++i) {
        diff = std::max(diff, std::abs(g.value(with_real).values[i] - feats[0][i]));
    }
    CHECK(diff > 1e-6);

    NodeId bad_vm = g.constant(Tensor::zeros({cfg.text_prompt_len + 1, cfg.d_e}));
    CHECK_THROWS_AS(m.encode_text(g, b, descs[0], bad_vm), tpl::ShapeError);
    CHECK_THROWS_AS(tpl::make_class_descriptor(cfg, 0), tpl::DataError);
    CHECK_THROWS_AS(tpl::make_class_descriptor(cfg, cfg.classes + 1), tpl::DataError);
}

TEST_CASE("width-2 encoder matches an independent plain-loop computation") {
    ModelConfig cfg = tiny_config();
    DualEncoder m = DualEncoder::init(cfg, 77);
    Tensor img = random_image(cfg, 5);

    Graph g;
    Bound b = m.bind(g);
    NodeId feat = m.encode_image(g, b, img, true);

    // Reference: flatten the single 8x8x3 patch row-major (y, x, channel).
    std::vector<double> patch(cfg.patch_dim());
    for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                patch[(y * 8 + x) * 3 + c] = img.values[(y * 8 + x) * 3 + c];
            }
        }
    }
    std::vector<double> e = ref_affine(patch, to_mat(m.vision.patch_w),
                                       m.vision.patch_b.values);
    Mat seq{m.vision.class_token.values, e, m.vision.prompts[0].values};
    seq = ref_block(seq, m.vision.blocks[0]);
    std::vector<double> proj = ref_affine(seq[0], to_mat(m.vision.projection),
                                          std::vector<double>(cfg.d_j, 0.0));
    double norm = 0.0;
    for (double v : proj) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < cfg.d_j; ++i) {
        CHECK(g.value(feat).values[i] == doctest::Approx(proj[i] / norm).epsilon(1e-12));
    }

    // Same oracle for the text side (descriptor of class 1, no v^m): the
    // sequence starts with the reserved prompt slots, zero-filled, then the
    // descriptor tokens, with one positional row per sequence position.
    ClassDescriptor d = tpl::make_class_descriptor(cfg, 1);
    NodeId tfeat = m.encode_text(g, b, d);
    Mat tseq;
    for (std::size_t i = 0; i < cfg.text_prompt_len; ++i) {
        std::vector<double> row(cfg.d_e);
        for (std::size_t c = 0; c < cfg.d_e; ++c) row[c] = m.text.pos_embed.at(i, c);
        tseq.push_back(row);
    }
    for (std::size_t i = 0; i < d.token_ids.size(); ++i) {
        std::vector<double> row(cfg.d_e);
        for (std::size_t c = 0; c < cfg.d_e; ++c) {
            row[c] = m.text.vocab_embed.at(d.token_ids[i], c) +
                     m.text.pos_embed.at(i + cfg.text_prompt_len, c);
        }
        tseq.push_back(row);
    }
    tseq = ref_block(tseq, m.text.blocks[0]);
    std::vector<double> tproj = ref_affine(tseq.back(), to_mat(m.text.projection),
                                           std::vector<double>(cfg.d_j, 0.0));
    double tnorm = 0.0;
    for (double v : tproj) tnorm += v * v;
    tnorm = std::sqrt(tnorm);
    for (std::size_t i = 0; i < cfg.d_j; ++i) {
        CHECK(g.value(tfeat).values[i] == doctest::Approx(tproj[i] / tnorm).epsilon(1e-12));
    }
}

TEST_CASE("prompts receive gradient while frozen backbone does not") {
    ModelConfig cfg;
    DualEncoder m = DualEncoder::init(cfg, 21);
    auto params = m.params();
    tpl::set_requires_grad_all(params, false);
    tpl::set_requires_grad(params, "prompt", true);

    Graph g;
    Bound b = m.bind(g);
    NodeId feat = m.encode_image(g, b, random_image(cfg, 9), true);
    Rng wrng(3);
    NodeId loss = g.sum(g.mul(feat, g.constant(Tensor::randn({1, cfg.d_j}, wrng, 1.0))));
    g.backward(loss);

    double total = 0.0;
    for (std::size_t k = 0; k < cfg.vision_layers; ++k) {
        for (double v : g.grad(b.id("vision.prompt" + std::to_string(k)))) {
            total += std::abs(v);
        }
    }
    CHECK(total > 0.0);
    for (double v : g.grad(b.id("vision.prompt0"))) CHECK(std::isfinite(v));
    CHECK(!g.has_grad(b.id("vision.blk0.wq")));  // frozen weights skip gradient work
}

TEST_CASE("checkpoint round-trip is exact and byte-stable") {
    namespace fs = std::filesystem;
    ModelConfig cfg = tiny_config();
    DualEncoder a = DualEncoder::init(cfg, 1);
    DualEncoder b = DualEncoder::init(cfg, 2);
    REQUIRE(a.vision.patch_w.values != b.vision.patch_w.values);

    const std::string stem = (fs::temp_directory_path() / "tpl_ckpt_test").string();
    nlohmann::json meta{{"stage", "test"}, {"seed", 1}};
    tpl::save_checkpoint(stem, meta, a.params());
    nlohmann::json got = tpl::load_checkpoint(stem, b.params());
    CHECK(got == meta);
    CHECK(tpl::peek_checkpoint_meta(stem) == meta);

    auto pa = a.params();
    auto pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor->values == pb[i].tensor->values);
    }

    // Saving the loaded copy reproduces both files byte-for-byte.
    const std::string stem2 = (fs::temp_directory_path() / "tpl_ckpt_test2").string();
    tpl::save_checkpoint(stem2, meta, b.params());
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(stem + ".bin") == slurp(stem2 + ".bin"));
    CHECK(slurp(stem + ".json") == slurp(stem2 + ".json"));

    // Truncated buffer is a structured failure naming the byte counts.
    fs::resize_file(stem + ".bin", 16);
    try {
        tpl::load_checkpoint(stem, b.params());
        FAIL("expected truncation error");
    } catch (const tpl::DataError& e) {
        CHECK(std::string(e.what()).find("16 bytes") != std::string::npos);
    }

    // Shape mismatch (different architecture) is rejected.
    ModelConfig other = tiny_config();
    other.d_e = 4;
    other.d_j = 4;
    DualEncoder c = DualEncoder::init(other, 3);
    tpl::save_checkpoint(stem, meta, a.params());
    CHECK_THROWS_AS(tpl::load_checkpoint(stem, c.params()), tpl::ShapeError);

    fs::remove(stem + ".json");
    fs::remove(stem + ".bin");
    fs::remove(stem2 + ".json");
    fs::remove(stem2 + ".bin");
}
