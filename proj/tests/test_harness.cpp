// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training/evaluation harness: arm semantics, configuration round-trips,
// the stage-2 freeze contract, the zero-gate reduction, scoring rules, and
// bit-exact reproducibility.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "tpl/harness.hpp"
#include "tpl/optim.hpp"

using namespace tpl;
using doctest::Approx;

namespace {

// Miniature setup: 4 classes, 3 domains, 16x16 images, 2-layer encoders.
ModelConfig tiny_model_config() {
    ModelConfig mc;
    mc.image_size = 16;
    mc.channels = 3;
    mc.patch_size = 8;
    mc.d_e = 16;
    mc.vision_layers = 2;
    mc.heads = 2;
    mc.text_layers = 1;
    mc.context = 8;
    mc.d_j = 16;
    mc.prompt_len = 2;
    mc.text_prompt_len = 2;
    mc.classes = 4;
    mc.gen_hidden = 16;
    return mc;
}

DatasetConfig tiny_data_config() {
    DatasetConfig dc;
    dc.classes = 4;
    dc.domains = 3;
    dc.per_cell = 12;
    dc.image_size = 16;
    dc.channels = 3;
    dc.seed = 5;
    return dc;
}

const DomainDataset& tiny_dataset() {
    static const DomainDataset ds = generate_synthetic(tiny_data_config());
    return ds;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.pretrain_iters = 20;
    cfg.pretrain_batch = 8;
    cfg.pretrain_warmup = 5;
    cfg.iterations = 8;
    cfg.batch_size = 6;
    cfg.lr = 1e-3;
    cfg.checkpoint_every = 4;
    cfg.probe_size = 24;
    cfg.seeds = {1};
    return cfg;
}

std::map<std::string, std::vector<double>> values_by_role(TplModel& model,
                                                          const std::string& role) {
    std::map<std::string, std::vector<double>> out;
    for (auto& p : model.params()) {
        if (p.role == role) out[p.name] = p.tensor->values;
    }
    return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct TempStem {
    std::string stem;
    explicit TempStem(const std::string& name)
        : stem((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempStem() {
        std::error_code ec;
        std::filesystem::remove(stem + ".json", ec);
        std::filesystem::remove(stem + ".bin", ec);
    }
};

}  // namespace

TEST_CASE("arm names, parsing, and role ownership") {
    for (ArmKind a : all_arms()) {
        CHECK(parse_arm(arm_name(a)) == a);
    }
    CHECK_THROWS_AS(parse_arm("prompted"), UsageError);

    // backbone is never trainable in stage 2
    for (ArmKind a : all_arms()) {
        CHECK_FALSE(arm_trains_role(a, "backbone"));
    }
    CHECK_FALSE(arm_trains_role(ArmKind::zero_shot, "prompt"));
    CHECK_FALSE(arm_trains_role(ArmKind::zero_shot, "generator"));
    CHECK_FALSE(arm_trains_role(ArmKind::zero_shot, "gate"));
    CHECK(arm_trains_role(ArmKind::language_only, "generator"));
    CHECK_FALSE(arm_trains_role(ArmKind::language_only, "prompt"));
    CHECK(arm_trains_role(ArmKind::vision_only, "prompt"));
    CHECK_FALSE(arm_trains_role(ArmKind::vision_only, "generator"));
    CHECK(arm_trains_role(ArmKind::joint_no_fusion, "prompt"));
    CHECK(arm_trains_role(ArmKind::joint_no_fusion, "generator"));
    CHECK_FALSE(arm_trains_role(ArmKind::joint_no_fusion, "gate"));
    for (ArmKind a : {ArmKind::joint, ArmKind::tpl}) {
        CHECK(arm_trains_role(a, "prompt"));
        CHECK(arm_trains_role(a, "generator"));
        CHECK(arm_trains_role(a, "gate"));
    }
}

TEST_CASE("train config JSON round-trip and validation") {
    TrainConfig c;
    c.pretrain_iters = 123;
    c.pretrain_lr = 2e-3;
    c.arm = ArmKind::vision_only;
    c.strategy = StrategyKind::cumulative;
    c.iterations = 77;
    c.batch_size = 9;
    c.lr = 4.5e-4;
    c.warmup = 11;
    c.theta = 2.5;
    c.per_domain = false;
    c.prompt_ensemble = true;
    c.prob_average = true;
    c.seeds = {4, 9};

    TrainConfig back = train_config_from_json(train_config_to_json(c));
    CHECK(back.pretrain_iters == c.pretrain_iters);
    CHECK(back.pretrain_lr == c.pretrain_lr);
    CHECK(back.arm == c.arm);
    CHECK(back.strategy == c.strategy);
    CHECK(back.iterations == c.iterations);
    CHECK(back.batch_size == c.batch_size);
    CHECK(back.lr == c.lr);
    CHECK(back.warmup == c.warmup);
    CHECK(back.theta == c.theta);
    CHECK(back.prompt_ensemble == c.prompt_ensemble);
    CHECK(back.prob_average == c.prob_average);
    CHECK(back.seeds == c.seeds);

    SUBCASE("defaults fill missing keys") {
        TrainConfig d = train_config_from_json(nlohmann::json::object());
        CHECK(d.arm == ArmKind::tpl);
        CHECK(d.strategy == StrategyKind::transitive);
        CHECK(d.iterations == 2000);
    }
    SUBCASE("unknown keys are rejected") {
        nlohmann::json j{{"iterations", 10}, {"learning_rate", 1e-3}};
        CHECK_THROWS_WITH_AS(train_config_from_json(j),
                             doctest::Contains("unknown key 'learning_rate'"), UsageError);
    }
    SUBCASE("wrong value types are usage errors") {
        CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"lr", "fast"}}), UsageError);
        CHECK_THROWS_AS(train_config_from_json(nlohmann::json::array()), UsageError);
    }
    SUBCASE("invalid combinations") {
        TrainConfig bad;
        bad.per_domain = true;
        bad.strategy = StrategyKind::joint;
        CHECK_THROWS_AS(bad.validate(), UsageError);

        bad = TrainConfig{};
        bad.prob_average = true;
        bad.eval_average = false;
        CHECK_THROWS_AS(bad.validate(), UsageError);

        bad = TrainConfig{};
        bad.lr_floor = bad.lr * 2;
        CHECK_THROWS_AS(bad.validate(), UsageError);

        bad = TrainConfig{};
        bad.val_fraction = 0.5;
        CHECK_THROWS_AS(bad.validate(), UsageError);

        bad = TrainConfig{};
        bad.seeds.clear();
        CHECK_THROWS_AS(bad.validate(), UsageError);

        bad = TrainConfig{};
        bad.iterations = 0;
        CHECK_THROWS_AS(bad.validate(), UsageError);
    }
}

TEST_CASE("model config JSON round-trip") {
    ModelConfig mc = tiny_model_config();
    ModelConfig back = model_config_from_json(model_config_to_json(mc));
    CHECK(back.image_size == mc.image_size);
    CHECK(back.d_e == mc.d_e);
    CHECK(back.vision_layers == mc.vision_layers);
    CHECK(back.prompt_len == mc.prompt_len);
    CHECK(back.classes == mc.classes);
    CHECK(back.tau == mc.tau);
    CHECK_THROWS_WITH_AS(model_config_from_json(nlohmann::json{{"width", 64}}),
                         doctest::Contains("unknown key 'width'"), UsageError);
}

TEST_CASE("warmup cosine schedule") {
    // ramp: reaches base exactly at t = warmup, then cosine decay
    CHECK(warmup_cosine_lr(0, 100, 10, 1.0, 0.0) == Approx(0.1).epsilon(1e-12));
    CHECK(warmup_cosine_lr(4, 100, 10, 1.0, 0.0) == Approx(0.5).epsilon(1e-12));
    CHECK(warmup_cosine_lr(9, 100, 10, 1.0, 0.0) == Approx(1.0).epsilon(1e-12));
    CHECK(warmup_cosine_lr(10, 100, 10, 1.0, 0.0) == cosine_lr(0, 90, 1.0, 0.0));
    CHECK(warmup_cosine_lr(55, 100, 10, 1.0, 0.25) == cosine_lr(45, 90, 1.0, 0.25));
    CHECK(warmup_cosine_lr(100, 100, 10, 1.0, 0.25) == Approx(0.25).epsilon(1e-12));
    // no warmup degenerates to plain cosine
    CHECK(warmup_cosine_lr(17, 40, 0, 2.0, 0.5) == cosine_lr(17, 40, 2.0, 0.5));
    CHECK_THROWS_AS(warmup_cosine_lr(0, 10, 10, 1.0, 0.0), Error);
}

TEST_CASE("pick_class resolves ties toward the lowest class id") {
    std::vector<double> v{0.1, 0.9, 0.9, 0.3};
    CHECK(pick_class(v) == 2);  // first of the tied maxima
    v = {0.5, 0.5, 0.5};
    CHECK(pick_class(v) == 1);
    v = {-2.0, -1.0, -3.0};
    CHECK(pick_class(v) == 2);
    CHECK_THROWS_AS(pick_class(std::vector<double>{}), ShapeError);
}

TEST_CASE("score averaging") {
    std::vector<double> tuned{2.0, 1.0, 0.0};
    std::vector<double> orig{0.0, 1.0, 2.0};

    SUBCASE("logit-space mean and the tie rule") {
        auto avg = average_scores(tuned, orig, false);
        CHECK(avg[0] == 1.0);
        CHECK(avg[1] == 1.0);
        CHECK(avg[2] == 1.0);
        // opposing preferences cancel; the tie resolves to class 1
        CHECK(pick_class(avg) == 1);
    }
    SUBCASE("averaging a vector with itself is the identity") {
        auto avg = average_scores(tuned, tuned, false);
        for (std::size_t i = 0; i < tuned.size(); ++i) CHECK(avg[i] == tuned[i]);
    }
    SUBCASE("probability-space mean is a distribution") {
        auto avg = average_scores(tuned, orig, true);
        double sum = 0.0;
        for (double p : avg) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == Approx(1.0).epsilon(1e-12));
        // softmax symmetry: reversed logits average to a palindrome
        CHECK(avg[0] == Approx(avg[2]).epsilon(1e-12));
    }
    SUBCASE("size mismatch") {
        CHECK_THROWS_AS(average_scores(tuned, std::vector<double>{1.0}, false), ShapeError);
    }
}

TEST_CASE("stage 2 trains exactly the arm's roles and freezes the backbone") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);

    for (ArmKind arm : {ArmKind::language_only, ArmKind::vision_only, ArmKind::joint_no_fusion,
                        ArmKind::tpl}) {
        INFO("arm ", arm_name(arm));
        TplModel model = TplModel::init(tiny_model_config(), 3);
        model.arm = arm;
        auto backbone_before = values_by_role(model, "backbone");
        auto prompt_before = values_by_role(model, "prompt");
        auto gen_before = values_by_role(model, "generator");
        auto gate_before = values_by_role(model, "gate");

        TrainConfig c = cfg;
        c.arm = arm;
        c.strategy = arm == ArmKind::tpl ? StrategyKind::transitive : StrategyKind::joint;
        // ensemble final parameters so flat validation cannot hand back the
        // untouched t = 0 snapshot
        c.prompt_ensemble = true;
        train_tpl(model, ds, sp, c, 1);

        // the backbone must be bit-identical
        CHECK(values_by_role(model, "backbone") == backbone_before);

        auto changed = [&](const std::map<std::string, std::vector<double>>& before,
                           const std::string& role) {
            return values_by_role(model, role) != before;
        };
        CHECK(changed(prompt_before, "prompt") == arm_trains_role(arm, "prompt"));
        CHECK(changed(gen_before, "generator") == arm_trains_role(arm, "generator"));
        CHECK(changed(gate_before, "gate") == arm_trains_role(arm, "gate"));
    }
}

TEST_CASE("stage-2 loss starts near ln C for an untrained backbone") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    cfg.arm = ArmKind::tpl;
    cfg.iterations = 4;
    cfg.checkpoint_every = 4;
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);
    TplModel model = TplModel::init(tiny_model_config(), 3);
    TrainResult tr = train_tpl(model, ds, sp, cfg, 1);
    REQUIRE(!tr.loss_trace.empty());
    CHECK(tr.loss_trace.front() ==
          Approx(std::log(static_cast<double>(ds.cfg.classes))).epsilon(0.5));
}

TEST_CASE("joint with zero gates reproduces joint_no_fusion") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);

    TplModel a = TplModel::init(tiny_model_config(), 3);
    a.arm = ArmKind::joint;
    for (auto& p : a.params()) {
        if (p.role == "gate") std::fill(p.tensor->values.begin(), p.tensor->values.end(), 0.0);
    }
    TplModel b = TplModel::init(tiny_model_config(), 3);
    b.arm = ArmKind::joint_no_fusion;

    SUBCASE("eval-space image features agree") {
        auto idx = sp.target_indices(ds);
        std::vector<std::size_t> some(idx.begin(), idx.begin() + 8);
        auto fa = extract_features(a, ds, some);
        auto fb = extract_features(b, ds, some);
        for (std::size_t i = 0; i < fa.size(); ++i) {
            CHECK(max_abs_diff(fa[i].feature, fb[i].feature) < 1e-12);
        }
    }
    SUBCASE("target accuracy agrees") {
        TrainConfig ca = cfg;
        ca.arm = ArmKind::joint;
        TrainConfig cb = cfg;
        cb.arm = ArmKind::joint_no_fusion;
        EvalResult ra = evaluate(a, ds, sp, ca);
        EvalResult rb = evaluate(b, ds, sp, cb);
        CHECK(ra.correct == rb.correct);
        CHECK(ra.total == rb.total);
    }
    SUBCASE("first-iteration loss agrees") {
        TrainConfig ca = cfg;
        ca.arm = ArmKind::joint;
        ca.strategy = StrategyKind::joint;
        ca.iterations = 1;
        ca.checkpoint_every = 1;
        TrainConfig cb = ca;
        cb.arm = ArmKind::joint_no_fusion;
        TrainResult ta = train_tpl(a, ds, sp, ca, 1);
        TrainResult tb = train_tpl(b, ds, sp, cb, 1);
        REQUIRE(!ta.loss_trace.empty());
        REQUIRE(!tb.loss_trace.empty());
        CHECK(ta.loss_trace.front() == Approx(tb.loss_trace.front()).epsilon(1e-10));
    }
}

TEST_CASE("pretraining learns the pooled source cells") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    cfg.pretrain_iters = 150;
    cfg.pretrain_batch = 16;
    cfg.pretrain_warmup = 30;
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);
    TplModel model = TplModel::init(tiny_model_config(), 1);
    PretrainResult pr = pretrain_backbone(model, ds, sp, cfg, 1);
    REQUIRE(pr.loss_trace.size() >= 2);
    CHECK(pr.loss_trace.back() < pr.loss_trace.front());
    // must clear chance level (1/C = 0.25) on its own training pool
    CHECK(pr.source_train_accuracy > 0.5);
    // prompts, generator, and gates stay untouched in stage 1
    TplModel fresh = TplModel::init(tiny_model_config(), 1);
    CHECK(values_by_role(model, "prompt") == values_by_role(fresh, "prompt"));
    CHECK(values_by_role(model, "generator") == values_by_role(fresh, "generator"));
    CHECK(values_by_role(model, "gate") == values_by_role(fresh, "gate"));
}

TEST_CASE("run_single is bit-exactly reproducible") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    cfg.arm = ArmKind::tpl;

    TplModel m1, m2;
    TrainResult t1, t2;
    EvalResult r1 = run_single(ds, 3, 1, cfg, nullptr, &t1, &m1);
    EvalResult r2 = run_single(ds, 3, 1, cfg, nullptr, &t2, &m2);
    CHECK(r1.correct == r2.correct);
    CHECK(r1.accuracy == r2.accuracy);
    CHECK(t1.best_val == t2.best_val);
    CHECK(t1.best_iter == t2.best_iter);
    REQUIRE(t1.schedule.has_value());
    REQUIRE(t2.schedule.has_value());
    REQUIRE(t1.schedule->history().size() == t2.schedule->history().size());
    for (std::size_t i = 0; i < t1.schedule->history().size(); ++i) {
        CHECK(t1.schedule->history()[i].d == t2.schedule->history()[i].d);
        CHECK(t1.schedule->history()[i].w_s == t2.schedule->history()[i].w_s);
    }
    auto p1 = m1.params();
    auto p2 = m2.params();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].tensor->values == p2[i].tensor->values);
    }

    SUBCASE("a different seed gives a different model") {
        TplModel m3;
        run_single(ds, 3, 2, cfg, nullptr, nullptr, &m3);
        bool any_diff = false;
        auto p3 = m3.params();
        for (std::size_t i = 0; i < p1.size(); ++i) {
            if (p1[i].tensor->values != p3[i].tensor->values) any_diff = true;
        }
        CHECK(any_diff);
    }
}

TEST_CASE("backbone cache round-trips and validates") {
    TplModel m = TplModel::init(tiny_model_config(), 9);
    BackboneCache cache;
    CHECK_FALSE(cache.has(1, 9));
    CHECK_THROWS_AS(cache.restore(1, 9, m), UsageError);
    cache.store(1, 9, m);
    CHECK(cache.has(1, 9));

    TplModel other = TplModel::init(tiny_model_config(), 10);
    cache.restore(1, 9, other);
    CHECK(values_by_role(other, "backbone") == values_by_role(m, "backbone"));
    // non-backbone roles keep their own values
    TplModel fresh10 = TplModel::init(tiny_model_config(), 10);
    CHECK(values_by_role(other, "generator") == values_by_role(fresh10, "generator"));
}

TEST_CASE("model checkpoints round-trip the full bundle") {
    TempStem tmp("tpl_harness_ckpt");
    TplModel m = TplModel::init(tiny_model_config(), 11);
    m.arm = ArmKind::joint;
    m.save(tmp.stem, nlohmann::json{{"note", "fixture"}});

    TplModel back = TplModel::load(tmp.stem);
    CHECK(back.arm == ArmKind::joint);
    CHECK(back.cfg.d_e == m.cfg.d_e);
    CHECK(back.cfg.classes == m.cfg.classes);
    auto pa = m.params();
    auto pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].tensor->values == pb[i].tensor->values);
    }
}

TEST_CASE("evaluation validates its inputs") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);
    TplModel model = TplModel::init(tiny_model_config(), 3);
    model.arm = ArmKind::zero_shot;

    CHECK_THROWS_AS(evaluate_subset(model, ds, sp, cfg, std::vector<std::size_t>{}), DataError);

    ModelConfig wrong = tiny_model_config();
    wrong.classes = 8;
    TplModel mismatched = TplModel::init(wrong, 3);
    CHECK_THROWS_AS(evaluate(mismatched, ds, sp, cfg), DataError);

    TplModel zs = TplModel::init(tiny_model_config(), 3);
    CHECK_THROWS_AS([&] {
        TrainConfig c = cfg;
        c.arm = ArmKind::zero_shot;
        zs.arm = ArmKind::zero_shot;
        train_tpl(zs, ds, sp, c, 1);
    }(), UsageError);
}

TEST_CASE("schedule bookkeeping during training") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    cfg.arm = ArmKind::tpl;
    cfg.strategy = StrategyKind::transitive;
    cfg.iterations = 8;
    cfg.checkpoint_every = 4;
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);
    TplModel model = TplModel::init(tiny_model_config(), 3);
    TrainResult tr = train_tpl(model, ds, sp, cfg, 1);

    REQUIRE(tr.schedule.has_value());
    const auto& h = tr.schedule->history();
    REQUIRE(h.size() == 2);  // t = 0 and t = 4
    CHECK(h[0].t == 0);
    CHECK(h[1].t == 4);
    // automatic theta makes the first lambda exactly zero
    CHECK(h[0].lambda == 0.0);
    CHECK(h[0].w_v == 1.0);
    CHECK(h[0].w_s == 0.0);
    CHECK(h[0].d > 0.0);
    // validation runs at each checkpoint plus once after the last iteration
    CHECK(tr.val_trace.size() == 3);
    CHECK(tr.loss_trace.size() == 2);
    CHECK(tr.best_val >= 0.0);
    CHECK(tr.best_iter <= cfg.iterations);
}

TEST_CASE("prompt ensemble replaces the best-val snapshot") {
    const auto& ds = tiny_dataset();
    TrainConfig cfg = tiny_train_config();
    cfg.arm = ArmKind::tpl;
    cfg.prompt_ensemble = true;
    SplitPlan sp = make_splits(ds, 3, cfg.val_fraction, 1);
    TplModel model = TplModel::init(tiny_model_config(), 3);
    TrainResult tr = train_tpl(model, ds, sp, cfg, 1);
    CHECK(tr.ensembled);
    for (auto& p : model.params()) {
        CHECK(p.tensor->all_finite());
    }
}
