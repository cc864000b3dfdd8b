// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <utility>

#include "tpl/checkpoint.hpp"
#include "tpl/objective.hpp"
#include "tpl/optim.hpp"

namespace tpl {

namespace {

// Independent RNG stream tags within one run seed.
constexpr std::uint64_t kPretrainStream = 11;
constexpr std::uint64_t kBatchStream = 12;
constexpr std::uint64_t kProbeStream = 13;

// Images per forward-only graph; bounds peak memory during probes and eval.
constexpr std::size_t kEvalChunk = 64;

const char* kGateP = "gate.P";
const char* kGateQ = "gate.Q";
const char* kGateR = "gate.R";

std::vector<ParamRef> role_params(std::vector<ParamRef> all, ArmKind arm) {
    std::vector<ParamRef> out;
    for (auto& p : all) {
        if (arm_trains_role(arm, p.role)) out.push_back(p);
    }
    return out;
}

NodeId average_nodes(Graph& g, const std::vector<NodeId>& xs) {
    NodeId acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = g.add(acc, xs[i]);
    return xs.size() == 1 ? acc : g.scale(acc, 1.0 / static_cast<double>(xs.size()));
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    const double mu = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

void check_dataset_match(const TplModel& model, const DomainDataset& ds, const char* who) {
    if (model.cfg.classes != ds.cfg.classes) {
        throw DataError(strf(who, ": model expects ", model.cfg.classes, " classes, dataset has ",
                             ds.cfg.classes));
    }
    if (model.cfg.image_size != ds.cfg.image_size || model.cfg.channels != ds.cfg.channels) {
        throw DataError(strf(who, ": model expects ", model.cfg.image_size, "x",
                             model.cfg.image_size, "x", model.cfg.channels, " images, dataset has ",
                             ds.cfg.image_size, "x", ds.cfg.image_size, "x", ds.cfg.channels));
    }
}

// Fixed per-arm loss weights; the schedule only drives the tpl arm.
Weights arm_weights(ArmKind arm, const Weights& scheduled) {
    switch (arm) {
        case ArmKind::language_only: return {0.0, 1.0};
        case ArmKind::vision_only: return {1.0, 0.0};
        case ArmKind::joint_no_fusion:
        case ArmKind::joint: return {0.5, 0.5};
        case ArmKind::tpl: return scheduled;
        case ArmKind::zero_shot: break;
    }
    throw UsageError("arm_weights: arm has no training weights");
}

std::vector<double> softmax_stable(std::span<const double> logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Whether evaluation-time text for the arm depends on the generated domain
// prompt v-bar (joint_no_fusion generates prompts in training only).
bool arm_eval_uses_vm(ArmKind arm) {
    return arm == ArmKind::language_only || arm_uses_fusion(arm);
}

// ---------------------------------------------------------------------------
// Forward-pass products shared by probes and evaluation.

// v^m per source domain, computed from pre-fusion image features (values).
std::map<std::size_t, Tensor> generate_vm(TplModel& model,
                                          const std::map<std::size_t, std::vector<Tensor>>& feats) {
    std::map<std::size_t, Tensor> vm;
    Graph g;
    auto params = model.params();
    Bound b = bind_params(g, params);
    for (const auto& [m, rows] : feats) {
        if (rows.empty()) throw DataError(strf("domain prompt: no features for domain ", m));
        std::vector<NodeId> ids;
        ids.reserve(rows.size());
        for (const Tensor& r : rows) ids.push_back(g.constant(r));
        vm.emplace(m, g.value(model.generator.generate(g, b, ids)));
    }
    return vm;
}

// Per-class text features (values) for the model's arm, plus the plain-text
// features of the frozen backbone. `vdom` — the domain prompt the table is
// conditioned on — is required for generator arms.
struct TextTable {
    std::vector<std::vector<double>> tuned;  // index class-1
    std::vector<std::vector<double>> plain;
};

TextTable build_text_table(TplModel& model, const Tensor* vdom) {
    const bool want_vm = arm_eval_uses_vm(model.arm);
    const bool fusion = arm_uses_fusion(model.arm);
    if (want_vm && vdom == nullptr) {
        throw DataError("text table: arm scores without a domain prompt");
    }
    auto descs = make_class_descriptors(model.cfg);
    TextTable table;
    table.tuned.resize(descs.size());
    table.plain.resize(descs.size());
    Graph g;
    auto params = model.params();
    Bound b = bind_params(g, params);
    std::optional<NodeId> vm_node;
    if (want_vm) vm_node = g.constant(*vdom);
    for (std::size_t c = 0; c < descs.size(); ++c) {
        NodeId plain = model.encoder.encode_text(g, b, descs[c]);
        table.plain[c] = g.value(plain).values;
        if (!want_vm) {
            // zero_shot, vision_only, and joint_no_fusion score plain text.
            table.tuned[c] = table.plain[c];
        } else if (!fusion) {
            // language_only scores the generated-prompt text directly.
            NodeId tbar = model.encoder.encode_text(g, b, descs[c], vm_node);
            table.tuned[c] = g.value(tbar).values;
        } else {
            NodeId tbar = model.encoder.encode_text(g, b, descs[c], vm_node);
            auto fused = fuse_text(g, tbar, plain, b.id(kGateQ), b.id(kGateR));
            table.tuned[c] = g.value(fused.second).values;
        }
    }
    return table;
}

// Chunked image forward pass: eval-space features, and optionally the
// pre-fusion and original (prompt-free) features.
struct ImagePass {
    std::vector<std::vector<double>> eval;  // arm's scoring feature per image
    std::vector<std::vector<double>> orig;  // prompt-free feature (optional)
    std::vector<std::vector<double>> pre;   // pre-fusion feature (optional)
};

ImagePass run_image_pass(TplModel& model, const DomainDataset& ds,
                         std::span<const std::size_t> indices, bool want_orig, bool want_pre) {
    const bool prompts = arm_uses_vision_prompts(model.arm);
    const bool fusion = arm_uses_fusion(model.arm);
    ImagePass out;
    out.eval.resize(indices.size());
    if (want_orig || fusion) out.orig.resize(indices.size());
    if (want_pre) out.pre.resize(indices.size());
    auto params = model.params();
    for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
        const std::size_t stop = std::min(indices.size(), start + kEvalChunk);
        Graph g;
        Bound b = bind_params(g, params);
        for (std::size_t i = start; i < stop; ++i) {
            const std::size_t idx = indices[i];
            if (idx >= ds.count()) {
                throw DataError(strf("image pass: index ", idx, " outside dataset of ",
                                     ds.count()));
            }
            Tensor img = image_as_tensor(ds, idx);
            NodeId pre = model.encoder.encode_image(g, b, img, prompts);
            if (want_pre) out.pre[i] = g.value(pre).values;
            NodeId feat = pre;
            if (fusion || want_orig) {
                // Without vision prompts the original feature is the same pass.
                NodeId orig = prompts ? model.encoder.encode_image(g, b, img, false) : pre;
                out.orig[i] = g.value(orig).values;
                if (fusion) feat = fuse_image(g, pre, orig, b.id(kGateP));
            }
            out.eval[i] = g.value(feat).values;
        }
    }
    return out;
}

// Evaluation-time domain prompts are conditioned on the evaluated images
// themselves: v^m averages the generated prompts over each evaluated
// domain's (unlabeled) samples, so text adapts to a domain never seen in
// training.
std::map<std::size_t, Tensor> eval_vm(TplModel& model, const DomainDataset& ds,
                                      std::span<const std::size_t> indices) {
    ImagePass pass = run_image_pass(model, ds, indices, false, true);
    std::map<std::size_t, std::vector<Tensor>> feats;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        feats[ds.domains[indices[i]]].push_back(Tensor::row(std::move(pass.pre[i])));
    }
    return generate_vm(model, feats);
}

EvalResult score_images(TplModel& model, const DomainDataset& ds,
                        std::span<const std::size_t> indices, const TextTable& table,
                        const TrainConfig& cfg) {
    ImagePass pass = run_image_pass(model, ds, indices, cfg.eval_average, false);
    const double inv_tau = 1.0 / model.cfg.tau;
    const std::size_t C = table.tuned.size();
    EvalResult r;
    r.total = indices.size();
    std::vector<double> tuned(C), orig(C);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        for (std::size_t c = 0; c < C; ++c) {
            tuned[c] = dot(pass.eval[i], table.tuned[c]) * inv_tau;
        }
        std::size_t pred;
        if (cfg.eval_average) {
            for (std::size_t c = 0; c < C; ++c) {
                orig[c] = dot(pass.orig[i], table.plain[c]) * inv_tau;
            }
            pred = pick_class(average_scores(tuned, orig, cfg.prob_average));
        } else {
            pred = pick_class(tuned);
        }
        if (pred == ds.labels[indices[i]]) ++r.correct;
    }
    r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

// Evaluation with an explicit domain-prompt table (checkpoint validation
// reuses probe features instead of re-encoding every training image).
EvalResult eval_with_vm(TplModel& model, const DomainDataset& ds,
                        std::span<const std::size_t> indices, const TrainConfig& cfg,
                        const std::map<std::size_t, Tensor>* vm) {
    if (indices.empty()) throw DataError("evaluate: empty index set");
    if (!arm_eval_uses_vm(model.arm)) {
        TextTable table = build_text_table(model, nullptr);
        return score_images(model, ds, indices, table, cfg);
    }
    if (vm == nullptr) throw DataError("evaluate: arm scores without domain prompts");
    // Each sample is scored under its own domain's prompt, the same
    // conditioning deployment uses (the target's prompt comes from the
    // evaluated images themselves).
    std::map<std::size_t, std::vector<std::size_t>> by_dom;
    for (std::size_t i : indices) by_dom[ds.domains[i]].push_back(i);
    EvalResult r;
    for (const auto& [m, sub] : by_dom) {
        auto it = vm->find(m);
        if (it == vm->end()) {
            throw DataError(strf("evaluate: no domain prompt for domain ", m));
        }
        TextTable table = build_text_table(model, &it->second);
        EvalResult part = score_images(model, ds, sub, table, cfg);
        r.correct += part.correct;
        r.total += part.total;
    }
    r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

// ---------------------------------------------------------------------------
// Stage-2 step machinery.

struct StepWeights {
    Weights global;
    const std::map<std::size_t, Weights>* per_domain = nullptr;
};

std::vector<std::size_t> sample_batch(const SplitPlan& sp, std::size_t batch, std::size_t t,
                                      Rng& rng) {
    const std::size_t M = sp.sources.size();
    std::vector<std::size_t> out;
    out.reserve(batch);
    std::size_t slot = 0;
    for (const auto& [m, lists] : sp.sources) {
        (void)m;
        // Remainder samples rotate across domains as t advances.
        std::size_t n = batch / M + ((slot + t) % M < batch % M ? 1 : 0);
        for (std::size_t k = 0; k < n; ++k) {
            out.push_back(lists.train[rng.uniform_int(lists.train.size())]);
        }
        ++slot;
    }
    return out;
}

// Probe subset: a per-domain sample of training indices, fixed per run.
std::vector<std::size_t> pick_probe(const SplitPlan& sp, std::size_t probe_size, Rng rng) {
    const std::size_t M = sp.sources.size();
    const std::size_t per_dom = std::max<std::size_t>(1, probe_size / M);
    std::vector<std::size_t> out;
    for (const auto& [m, lists] : sp.sources) {
        (void)m;
        std::vector<std::size_t> pool = lists.train;
        const std::size_t take = std::min(per_dom, pool.size());
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + rng.uniform_int(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    }
    return out;
}

struct LearnState {
    std::vector<ParamRef> params;
    std::vector<AdamWState> opt;
};

void snapshot_values(const std::vector<ParamRef>& params, std::vector<std::vector<double>>& out) {
    out.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i].tensor->values;
}

void restore_values(std::vector<ParamRef>& params, const std::vector<std::vector<double>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->values = snap[i];
}

// One optimizer step on a domain-balanced batch; returns the batch-mean loss.
// Generator arms require gen_rows: the per-domain feature pool (the probe,
// refreshed at checkpoints for prompted arms) that v^m is generated from, so
// the domain prompt summarizes each source domain rather than the batch's few
// samples, and generator gradients do not leak into the image tower's prompts
// through the conditioning input.
double train_step(TplModel& model, const DomainDataset& ds,
                  const std::vector<ClassDescriptor>& descs,
                  const std::vector<std::size_t>& bidx, const StepWeights& sw,
                  const std::map<std::size_t, std::vector<Tensor>>* gen_rows, double lr_t,
                  LearnState& learn) {
    const bool prompts = arm_uses_vision_prompts(model.arm);
    const bool fusion = arm_uses_fusion(model.arm);
    const bool gen = arm_uses_generator(model.arm);
    const std::size_t B = bidx.size();
    const std::size_t C = descs.size();

    Graph g;
    auto params = model.params();
    Bound b = bind_params(g, params);

    std::vector<NodeId> img(B);
    std::vector<std::size_t> labels(B), domains(B);
    std::map<std::size_t, std::vector<std::size_t>> pos_by_dom;
    for (std::size_t i = 0; i < B; ++i) {
        Tensor timg = image_as_tensor(ds, bidx[i]);
        labels[i] = ds.labels[bidx[i]];
        domains[i] = ds.domains[bidx[i]];
        NodeId pre = model.encoder.encode_image(g, b, timg, prompts);
        pos_by_dom[domains[i]].push_back(i);
        if (fusion) {
            NodeId orig = model.encoder.encode_image(g, b, timg, false);
            img[i] = fuse_image(g, pre, orig, b.id(kGateP));
        } else {
            img[i] = pre;
        }
    }

    std::vector<NodeId> t_plain(C);
    for (std::size_t c = 0; c < C; ++c) t_plain[c] = model.encoder.encode_text(g, b, descs[c]);

    std::map<std::size_t, NodeId> vm;
    std::map<std::size_t, std::vector<NodeId>> text_dom;
    std::vector<NodeId> text_agn = t_plain;
    if (gen) {
        if (gen_rows == nullptr) {
            throw DataError("train step: generator arm needs domain feature rows");
        }
        std::vector<NodeId> vm_list;
        for (const auto& [m, rows] : *gen_rows) {
            std::vector<NodeId> ids;
            ids.reserve(rows.size());
            for (const Tensor& r : rows) ids.push_back(g.constant(r));
            NodeId v = model.generator.generate(g, b, ids);
            vm.emplace(m, v);
            vm_list.push_back(v);
        }
        for (const auto& [m, v] : vm) {
            auto& dst = text_dom[m];
            dst.reserve(C);
            for (std::size_t c = 0; c < C; ++c) {
                NodeId tbar = model.encoder.encode_text(g, b, descs[c], v);
                dst.push_back(fusion
                                  ? fuse_text(g, tbar, t_plain[c], b.id(kGateQ), b.id(kGateR)).first
                                  : tbar);
            }
        }
        if (fusion) {
            NodeId vbar = average_nodes(g, vm_list);
            for (std::size_t c = 0; c < C; ++c) {
                NodeId tbar = model.encoder.encode_text(g, b, descs[c], vbar);
                text_agn[c] =
                    fuse_text(g, tbar, t_plain[c], b.id(kGateQ), b.id(kGateR)).second;
            }
        }
    }

    NodeId loss_sum;
    if (sw.per_domain == nullptr) {
        LossBatch lb{img, labels, domains, text_agn, text_dom, model.cfg.tau};
        if (!gen) {
            loss_sum = g.scale(loss_lv(g, lb), sw.global.w_v);
        } else if (model.arm == ArmKind::language_only) {
            loss_sum = g.scale(loss_ls(g, lb), sw.global.w_s);
        } else {
            loss_sum = total_loss(g, loss_lv(g, lb), loss_ls(g, lb), sw.global.w_v,
                                  sw.global.w_s);
        }
    } else {
        // Per-domain weight pairs: one sub-batch per domain.
        std::vector<NodeId> parts;
        for (const auto& [m, pos] : pos_by_dom) {
            auto wit = sw.per_domain->find(m);
            if (wit == sw.per_domain->end()) {
                throw DataError(strf("train: no per-domain weights for domain ", m));
            }
            LossBatch lb;
            lb.tau = model.cfg.tau;
            lb.text_agnostic = text_agn;
            lb.text_domain[m] = text_dom.at(m);
            for (std::size_t i : pos) {
                lb.image_features.push_back(img[i]);
                lb.labels.push_back(labels[i]);
                lb.domains.push_back(domains[i]);
            }
            parts.push_back(total_loss(g, loss_lv(g, lb), loss_ls(g, lb), wit->second.w_v,
                                       wit->second.w_s));
        }
        loss_sum = parts.size() == 1 ? parts.front() : g.sum(g.concat_cols(parts));
    }
    NodeId loss = g.scale(loss_sum, 1.0 / static_cast<double>(B));

    const double loss_val = g.value(loss).values[0];
    if (!std::isfinite(loss_val)) {
        throw NumericError(strf("training diverged: non-finite loss (w_V=", sw.global.w_v,
                                ", w_S=", sw.global.w_s, ")"));
    }
    g.backward(loss);
    harvest_grads(g, b, learn.params);
    AdamWConfig oc;
    oc.lr = lr_t;
    for (std::size_t i = 0; i < learn.params.size(); ++i) {
        adamw_step(*learn.params[i].tensor, learn.opt[i], oc);
    }
    return loss_val;
}

}  // namespace

// ---------------------------------------------------------------------------
// Arms.

const char* arm_name(ArmKind arm) {
    switch (arm) {
        case ArmKind::zero_shot: return "zero_shot";
        case ArmKind::language_only: return "language_only";
        case ArmKind::vision_only: return "vision_only";
        case ArmKind::joint_no_fusion: return "joint_no_fusion";
        case ArmKind::joint: return "joint";
        case ArmKind::tpl: return "tpl";
    }
    throw UsageError("arm_name: invalid arm");
}

std::vector<ArmKind> all_arms() {
    return {ArmKind::zero_shot,       ArmKind::language_only, ArmKind::vision_only,
            ArmKind::joint_no_fusion, ArmKind::joint,         ArmKind::tpl};
}

ArmKind parse_arm(const std::string& name) {
    for (ArmKind a : all_arms()) {
        if (name == arm_name(a)) return a;
    }
    throw UsageError(strf("unknown arm '", name,
                          "' (expected zero_shot, language_only, vision_only, "
                          "joint_no_fusion, joint, or tpl)"));
}

bool arm_uses_vision_prompts(ArmKind arm) {
    return arm == ArmKind::vision_only || arm == ArmKind::joint_no_fusion ||
           arm == ArmKind::joint || arm == ArmKind::tpl;
}

bool arm_uses_generator(ArmKind arm) {
    return arm == ArmKind::language_only || arm == ArmKind::joint_no_fusion ||
           arm == ArmKind::joint || arm == ArmKind::tpl;
}

bool arm_uses_fusion(ArmKind arm) { return arm == ArmKind::joint || arm == ArmKind::tpl; }

bool arm_trains_role(ArmKind arm, const std::string& role) {
    if (role == "prompt") return arm_uses_vision_prompts(arm);
    if (role == "generator") return arm_uses_generator(arm);
    if (role == "gate") return arm_uses_fusion(arm);
    return false;  // backbone stays frozen in stage 2
}

// ---------------------------------------------------------------------------
// Configuration.

void TrainConfig::validate() const {
    if (pretrain_batch == 0) throw UsageError("train config: pretrain_batch must be positive");
    if (!(pretrain_lr > 0.0)) throw UsageError("train config: pretrain_lr must be > 0");
    if (pretrain_text_lock < 0.0 || pretrain_text_lock > 1.0) {
        throw UsageError(strf("train config: pretrain_text_lock ", pretrain_text_lock,
                              " outside [0, 1]"));
    }
    if (iterations == 0) throw UsageError("train config: iterations must be positive");
    if (batch_size == 0) throw UsageError("train config: batch_size must be positive");
    if (!(lr > 0.0)) throw UsageError("train config: lr must be > 0");
    if (lr_floor < 0.0 || lr_floor > lr) {
        throw UsageError(strf("train config: lr_floor ", lr_floor, " outside [0, lr]"));
    }
    if (checkpoint_every == 0) throw UsageError("train config: checkpoint_every must be positive");
    if (probe_size == 0) throw UsageError("train config: probe_size must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) {
        throw UsageError(strf("train config: val_fraction ", val_fraction,
                              " outside (0, 0.5)"));
    }
    if (seeds.empty()) throw UsageError("train config: at least one seed required");
    if (per_domain && strategy != StrategyKind::transitive) {
        throw UsageError("train config: per_domain weighting requires the transitive strategy");
    }
    if (prob_average && !eval_average) {
        throw UsageError("train config: prob_average requires eval_average");
    }
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"pretrain_iters", c.pretrain_iters},
                          {"pretrain_batch", c.pretrain_batch},
                          {"pretrain_lr", c.pretrain_lr},
                          {"pretrain_warmup", c.pretrain_warmup},
                          {"pretrain_text_lock", c.pretrain_text_lock},
                          {"arm", arm_name(c.arm)},
                          {"strategy", strategy_name(c.strategy)},
                          {"iterations", c.iterations},
                          {"batch_size", c.batch_size},
                          {"lr", c.lr},
                          {"lr_floor", c.lr_floor},
                          {"warmup", c.warmup},
                          {"theta", c.theta},
                          {"checkpoint_every", c.checkpoint_every},
                          {"probe_size", c.probe_size},
                          {"per_domain", c.per_domain},
                          {"prompt_ensemble", c.prompt_ensemble},
                          {"eval_average", c.eval_average},
                          {"prob_average", c.prob_average},
                          {"val_fraction", c.val_fraction},
                          {"seeds", c.seeds}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("train config: expected a JSON object");
    static const std::set<std::string> known = {
        "pretrain_iters", "pretrain_batch", "pretrain_lr", "pretrain_warmup",
        "pretrain_text_lock",
        "arm",            "strategy",       "iterations",  "batch_size",
        "lr",             "lr_floor",       "warmup",      "theta",
        "checkpoint_every", "probe_size",   "per_domain",  "prompt_ensemble",
        "eval_average",   "prob_average",   "val_fraction", "seeds"};
    for (const auto& item : j.items()) {
        if (!known.count(item.key())) {
            throw UsageError(strf("train config: unknown key '", item.key(), "'"));
        }
    }
    TrainConfig c;
    try {
        auto u64 = [&](const char* k, std::size_t& dst) {
            if (j.contains(k)) dst = j.at(k).get<std::size_t>();
        };
        auto f64 = [&](const char* k, double& dst) {
            if (j.contains(k)) dst = j.at(k).get<double>();
        };
        auto flag = [&](const char* k, bool& dst) {
            if (j.contains(k)) dst = j.at(k).get<bool>();
        };
        u64("pretrain_iters", c.pretrain_iters);
        u64("pretrain_batch", c.pretrain_batch);
        f64("pretrain_lr", c.pretrain_lr);
        u64("pretrain_warmup", c.pretrain_warmup);
        f64("pretrain_text_lock", c.pretrain_text_lock);
        if (j.contains("arm")) c.arm = parse_arm(j.at("arm").get<std::string>());
        if (j.contains("strategy")) {
            c.strategy = parse_strategy(j.at("strategy").get<std::string>());
        }
        u64("iterations", c.iterations);
        u64("batch_size", c.batch_size);
        f64("lr", c.lr);
        f64("lr_floor", c.lr_floor);
        u64("warmup", c.warmup);
        f64("theta", c.theta);
        u64("checkpoint_every", c.checkpoint_every);
        u64("probe_size", c.probe_size);
        flag("per_domain", c.per_domain);
        flag("prompt_ensemble", c.prompt_ensemble);
        flag("eval_average", c.eval_average);
        flag("prob_average", c.prob_average);
        f64("val_fraction", c.val_fraction);
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(strf("train config: ", e.what()));
    }
    c.validate();
    return c;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"image_size", c.image_size},
                          {"channels", c.channels},
                          {"patch_size", c.patch_size},
                          {"d_e", c.d_e},
                          {"vision_layers", c.vision_layers},
                          {"heads", c.heads},
                          {"text_layers", c.text_layers},
                          {"context", c.context},
                          {"d_j", c.d_j},
                          {"prompt_len", c.prompt_len},
                          {"text_prompt_len", c.text_prompt_len},
                          {"classes", c.classes},
                          {"gen_hidden", c.gen_hidden},
                          {"tau", c.tau}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("model config: expected a JSON object");
    static const std::set<std::string> known = {
        "image_size", "channels", "patch_size",      "d_e",     "vision_layers",
        "heads",      "text_layers", "context",      "d_j",     "prompt_len",
        "text_prompt_len", "classes", "gen_hidden",  "tau"};
    for (const auto& item : j.items()) {
        if (!known.count(item.key())) {
            throw UsageError(strf("model config: unknown key '", item.key(), "'"));
        }
    }
    ModelConfig c;
    try {
        auto u64 = [&](const char* k, std::size_t& dst) {
            if (j.contains(k)) dst = j.at(k).get<std::size_t>();
        };
        u64("image_size", c.image_size);
        u64("channels", c.channels);
        u64("patch_size", c.patch_size);
        u64("d_e", c.d_e);
        u64("vision_layers", c.vision_layers);
        u64("heads", c.heads);
        u64("text_layers", c.text_layers);
        u64("context", c.context);
        u64("d_j", c.d_j);
        u64("prompt_len", c.prompt_len);
        u64("text_prompt_len", c.text_prompt_len);
        u64("classes", c.classes);
        u64("gen_hidden", c.gen_hidden);
        if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(strf("model config: ", e.what()));
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Model bundle.

TplModel TplModel::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    TplModel m;
    m.cfg = cfg;
    m.encoder = DualEncoder::init(cfg, seed);
    m.generator = DomainPromptGenerator::init(cfg, Rng(seed).fork(101, 0).next());
    m.gates = FusionGates::init(cfg);
    return m;
}

std::vector<ParamRef> TplModel::params() {
    std::vector<ParamRef> out = encoder.params();
    for (auto& p : generator.params()) out.push_back(p);
    for (auto& p : gates.params()) out.push_back(p);
    return out;
}

void TplModel::save(const std::string& stem, const nlohmann::json& extra_meta) {
    nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
    meta["model"] = model_config_to_json(cfg);
    meta["arm"] = arm_name(arm);
    save_checkpoint(stem, meta, params());
}

TplModel TplModel::load(const std::string& stem) {
    nlohmann::json meta = peek_checkpoint_meta(stem);
    if (!meta.contains("model")) {
        throw DataError(strf("checkpoint ", stem, ": meta lacks a model config"));
    }
    TplModel m = init(model_config_from_json(meta.at("model")), 0);
    if (meta.contains("arm")) m.arm = parse_arm(meta.at("arm").get<std::string>());
    auto params = m.params();
    load_checkpoint(stem, params);
    return m;
}

// ---------------------------------------------------------------------------
// Scoring helpers.

std::size_t pick_class(std::span<const double> logits) {
    if (logits.empty()) throw ShapeError("pick_class: empty score vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best + 1;
}

std::vector<double> average_scores(std::span<const double> tuned,
                                   std::span<const double> original, bool prob_space) {
    if (tuned.empty() || tuned.size() != original.size()) {
        throw ShapeError(strf("average_scores: ", tuned.size(), " tuned vs ", original.size(),
                              " original scores"));
    }
    std::vector<double> out(tuned.size());
    if (prob_space) {
        std::vector<double> p = softmax_stable(tuned);
        std::vector<double> q = softmax_stable(original);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (p[i] + q[i]);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (tuned[i] + original[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 1.

PretrainResult pretrain_backbone(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                                 const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    check_dataset_match(model, ds, "pretrain");
    if (cfg.pretrain_iters == 0) throw UsageError("pretrain: pretrain_iters must be positive");
    if (sp.sources.empty()) throw DataError("pretrain: split plan has no source domains");
    auto pooled = sp.all_train();
    if (pooled.empty()) throw DataError("pretrain: no training samples");

    auto params = model.params();
    set_requires_grad_all(params, false);
    set_requires_grad(params, "backbone", true);
    LearnState learn;
    for (auto& p : params) {
        if (p.tensor->requires_grad) learn.params.push_back(p);
    }
    learn.opt.reserve(learn.params.size());
    for (auto& p : learn.params) learn.opt.push_back(AdamWState::for_param(*p.tensor));

    auto descs = make_class_descriptors(model.cfg);
    Rng rng = Rng(seed).fork(kPretrainStream, 0);
    const std::size_t warm = std::min(cfg.pretrain_warmup, cfg.pretrain_iters / 2);
    // After this step the text tower is locked and only the image tower keeps
    // aligning to the fixed text anchors.
    const auto lock_t = static_cast<std::size_t>(
        cfg.pretrain_text_lock * static_cast<double>(cfg.pretrain_iters));

    PretrainResult res;
    double window = 0.0;
    std::size_t window_n = 0;
    for (std::size_t t = 0; t < cfg.pretrain_iters; ++t) {
        const std::size_t B = cfg.pretrain_batch;
        Graph g;
        Bound b = bind_params(g, params);
        LossBatch lb;
        lb.tau = model.cfg.tau;
        for (std::size_t i = 0; i < B; ++i) {
            const std::size_t idx = pooled[rng.uniform_int(pooled.size())];
            lb.image_features.push_back(
                model.encoder.encode_image(g, b, image_as_tensor(ds, idx), false));
            lb.labels.push_back(ds.labels[idx]);
            lb.domains.push_back(ds.domains[idx]);
        }
        for (const auto& d : descs) {
            lb.text_agnostic.push_back(model.encoder.encode_text(g, b, d));
        }
        NodeId loss = g.scale(loss_lv(g, lb), 1.0 / static_cast<double>(B));
        const double loss_val = g.value(loss).values[0];
        if (!std::isfinite(loss_val)) {
            throw NumericError(strf("pretraining diverged at iteration ", t));
        }
        g.backward(loss);
        harvest_grads(g, b, learn.params);
        AdamWConfig oc;
        oc.lr = warmup_cosine_lr(t, cfg.pretrain_iters, warm, cfg.pretrain_lr, 0.0);
        for (std::size_t i = 0; i < learn.params.size(); ++i) {
            if (t >= lock_t && learn.params[i].name.starts_with("text.")) continue;
            adamw_step(*learn.params[i].tensor, learn.opt[i], oc);
        }
        window += loss_val;
        ++window_n;
        if ((t + 1) % cfg.checkpoint_every == 0 || t + 1 == cfg.pretrain_iters) {
            res.loss_trace.push_back(window / static_cast<double>(window_n));
            window = 0.0;
            window_n = 0;
        }
        res.final_loss = loss_val;
    }
    set_requires_grad_all(params, false);

    // Zero-shot accuracy on a strided training probe.
    const std::size_t probe_n = std::min<std::size_t>(pooled.size(), 256);
    const std::size_t stride = std::max<std::size_t>(1, pooled.size() / probe_n);
    std::vector<std::size_t> probe;
    for (std::size_t i = 0; i < pooled.size() && probe.size() < probe_n; i += stride) {
        probe.push_back(pooled[i]);
    }
    const ArmKind saved_arm = model.arm;
    model.arm = ArmKind::zero_shot;
    TrainConfig probe_cfg = cfg;
    probe_cfg.eval_average = false;
    probe_cfg.prob_average = false;
    res.source_train_accuracy = eval_with_vm(model, ds, probe, probe_cfg, nullptr).accuracy;
    model.arm = saved_arm;
    return res;
}

// ---------------------------------------------------------------------------
// Stage 2.

TrainResult train_tpl(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                      const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    check_dataset_match(model, ds, "train");
    if (cfg.arm == ArmKind::zero_shot) {
        throw UsageError("train: the zero_shot arm has no trainable parameters");
    }
    if (sp.sources.empty()) throw DataError("train: split plan has no source domains");
    model.arm = cfg.arm;

    auto params = model.params();
    set_requires_grad_all(params, false);
    for (const char* role : {"prompt", "generator", "gate"}) {
        if (arm_trains_role(cfg.arm, role)) set_requires_grad(params, role, true);
    }
    LearnState learn;
    learn.params = role_params(params, cfg.arm);
    learn.opt.reserve(learn.params.size());
    for (auto& p : learn.params) learn.opt.push_back(AdamWState::for_param(*p.tensor));

    SchedulerConfig scfg;
    scfg.total_iters = cfg.iterations;
    scfg.theta = cfg.theta;
    scfg.checkpoint_every = cfg.checkpoint_every;
    ScheduleState sched(cfg.strategy, scfg);

    const bool need_vm = arm_eval_uses_vm(cfg.arm);  // validation scoring needs domain prompts
    const bool need_distance = cfg.arm == ArmKind::tpl &&
                               cfg.strategy == StrategyKind::transitive;
    std::vector<std::size_t> source_domains;
    for (const auto& [m, lists] : sp.sources) {
        (void)lists;
        source_domains.push_back(m);
    }

    auto descs = make_class_descriptors(model.cfg);
    Rng batch_rng = Rng(seed).fork(kBatchStream, 0);
    const auto probe_idx = pick_probe(sp, cfg.probe_size, Rng(seed).fork(kProbeStream, 0));
    const auto val_idx = sp.all_val();
    if (val_idx.empty()) throw DataError("train: split plan has no validation samples");

    // Generator arms condition v^m on the probe's per-domain feature pool —
    // the same summary the evaluation averaging uses — not the batch's few
    // samples per domain. The pool is refreshed at every checkpoint so arms
    // with vision prompts condition on current features.
    std::map<std::size_t, std::vector<Tensor>> probe_rows;
    const bool gen_arm = arm_uses_generator(cfg.arm);

    TrainResult res;
    std::map<std::size_t, double> dm;             // per-domain distances (last probe)
    std::map<std::size_t, Weights> dom_weights;   // per-domain weights (per iteration)
    std::map<std::size_t, Tensor> probe_vm;       // domain prompts from the probe
    std::vector<std::vector<double>> best_snap;
    double best_val = -1.0;
    std::size_t best_iter = 0;
    std::vector<std::vector<double>> ens_sum;
    double ens_norm = 0.0;
    double window = 0.0;
    std::size_t window_n = 0;

    auto ensemble_weight = [&](std::size_t t) {
        const double center = 0.6 * static_cast<double>(cfg.iterations);
        const double width = 0.2 * static_cast<double>(cfg.iterations);
        const double z = (static_cast<double>(t) - center) / width;
        return std::exp(-0.5 * z * z);
    };

    auto on_checkpoint = [&](std::size_t t) {
        double d = 0.0;
        if (need_distance || need_vm || gen_arm) {
            ImagePass pass = run_image_pass(model, ds, probe_idx, false, need_vm || gen_arm);
            if (gen_arm) {
                probe_rows.clear();
                for (std::size_t i = 0; i < probe_idx.size(); ++i) {
                    probe_rows[ds.domains[probe_idx[i]]].push_back(Tensor::row(pass.pre[i]));
                }
            }
            if (need_distance) {
                std::vector<FeaturePoint> feats;
                feats.reserve(probe_idx.size());
                for (std::size_t i = 0; i < probe_idx.size(); ++i) {
                    feats.push_back({pass.eval[i], ds.labels[probe_idx[i]],
                                     ds.domains[probe_idx[i]]});
                }
                d = compute_domain_distance(feats);
                if (cfg.per_domain) dm = per_domain_distance(feats, source_domains);
            }
            if (need_vm) probe_vm = generate_vm(model, probe_rows);
        }
        if (t < cfg.iterations) sched.on_checkpoint(t, d);

        const double acc =
            eval_with_vm(model, ds, val_idx, cfg, need_vm ? &probe_vm : nullptr).accuracy;
        res.val_trace.push_back(acc);
        // t = 0 measures the untouched initialization (that baseline is the
        // zero_shot arm's job); only trained checkpoints compete for the
        // returned snapshot.
        if (t > 0 && acc > best_val) {
            best_val = acc;
            best_iter = t;
            snapshot_values(learn.params, best_snap);
        }
        if (cfg.prompt_ensemble) {
            const double w = ensemble_weight(t);
            if (ens_sum.empty()) {
                ens_sum.resize(learn.params.size());
                for (std::size_t i = 0; i < learn.params.size(); ++i) {
                    ens_sum[i].assign(learn.params[i].tensor->numel(), 0.0);
                }
            }
            for (std::size_t i = 0; i < learn.params.size(); ++i) {
                const auto& v = learn.params[i].tensor->values;
                for (std::size_t k = 0; k < v.size(); ++k) ens_sum[i][k] += w * v[k];
            }
            ens_norm += w;
        }
        if (window_n > 0) {
            res.loss_trace.push_back(window / static_cast<double>(window_n));
            window = 0.0;
            window_n = 0;
        }
    };

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        if (t % cfg.checkpoint_every == 0) on_checkpoint(t);

        StepWeights sw;
        sw.global = arm_weights(cfg.arm, sched.weights_at(t));
        if (cfg.per_domain && cfg.arm == ArmKind::tpl) {
            dom_weights.clear();
            for (const auto& [m, d_m] : dm) {
                dom_weights[m] = compute_weights(
                    compute_lambda(d_m, t, cfg.iterations, sched.config().theta));
            }
            sw.per_domain = &dom_weights;
        }
        const auto bidx = sample_batch(sp, cfg.batch_size, t, batch_rng);
        const double lr_t = warmup_cosine_lr(t, cfg.iterations,
                                             std::min(cfg.warmup, cfg.iterations / 2), cfg.lr,
                                             cfg.lr_floor);
        try {
            window += train_step(model, ds, descs, bidx, sw,
                                 gen_arm ? &probe_rows : nullptr, lr_t, learn);
        } catch (const NumericError& e) {
            throw NumericError(strf(e.what(), " at iteration ", t));
        }
        ++window_n;
    }
    on_checkpoint(cfg.iterations);  // final validation / ensemble snapshot

    if (cfg.prompt_ensemble && ens_norm > 0.0) {
        for (std::size_t i = 0; i < learn.params.size(); ++i) {
            auto& v = learn.params[i].tensor->values;
            for (std::size_t k = 0; k < v.size(); ++k) v[k] = ens_sum[i][k] / ens_norm;
        }
        res.ensembled = true;
    } else if (!best_snap.empty()) {
        restore_values(learn.params, best_snap);
    }
    set_requires_grad_all(params, false);

    res.schedule = std::move(sched);
    res.best_val = best_val;
    res.best_iter = best_iter;
    return res;
}

// ---------------------------------------------------------------------------
// Evaluation.

EvalResult evaluate_subset(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                           const TrainConfig& cfg, std::span<const std::size_t> indices) {
    cfg.validate();
    check_dataset_match(model, ds, "evaluate");
    (void)sp;
    std::map<std::size_t, Tensor> vm;
    if (arm_eval_uses_vm(model.arm)) {
        if (indices.empty()) throw DataError("evaluate: empty index set");
        vm = eval_vm(model, ds, indices);
    }
    return eval_with_vm(model, ds, indices, cfg, vm.empty() ? nullptr : &vm);
}

EvalResult evaluate(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                    const TrainConfig& cfg) {
    const auto idx = sp.target_indices(ds);
    return evaluate_subset(model, ds, sp, cfg, idx);
}

std::vector<FeaturePoint> extract_features(TplModel& model, const DomainDataset& ds,
                                           std::span<const std::size_t> indices) {
    check_dataset_match(model, ds, "extract_features");
    if (indices.empty()) throw DataError("extract_features: empty index set");
    ImagePass pass = run_image_pass(model, ds, indices, false, false);
    std::vector<FeaturePoint> out;
    out.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.push_back({std::move(pass.eval[i]), ds.labels[indices[i]], ds.domains[indices[i]]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Protocol drivers.

bool BackboneCache::has(std::size_t target, std::uint64_t seed) const {
    return slots_.count({target, seed}) != 0;
}

void BackboneCache::store(std::size_t target, std::uint64_t seed, TplModel& model) {
    auto& slot = slots_[{target, seed}];
    slot.clear();
    for (auto& p : model.params()) {
        if (p.role == "backbone") slot.emplace(p.name, *p.tensor);
    }
}

void BackboneCache::restore(std::size_t target, std::uint64_t seed, TplModel& model) const {
    auto it = slots_.find({target, seed});
    if (it == slots_.end()) {
        throw UsageError(strf("backbone cache: no entry for target ", target, ", seed ", seed));
    }
    for (auto& p : model.params()) {
        if (p.role != "backbone") continue;
        auto f = it->second.find(p.name);
        if (f == it->second.end()) {
            throw DataError(strf("backbone cache: missing parameter ", p.name));
        }
        if (!same_shape(f->second, *p.tensor)) {
            throw ShapeError(strf("backbone cache: parameter ", p.name, " is ",
                                  f->second.shape_str(), ", expected ", p.tensor->shape_str()));
        }
        p.tensor->values = f->second.values;
    }
}

EvalResult run_single(const DomainDataset& ds, std::size_t target, std::uint64_t seed,
                      const TrainConfig& cfg, BackboneCache* cache, TrainResult* train_out,
                      TplModel* model_out) {
    cfg.validate();
    SplitPlan sp = make_splits(ds, target, cfg.val_fraction, seed);

    ModelConfig mc;
    mc.image_size = ds.cfg.image_size;
    mc.channels = ds.cfg.channels;
    mc.classes = ds.cfg.classes;
    TplModel model = TplModel::init(mc, seed);

    if (cache != nullptr && cache->has(target, seed)) {
        cache->restore(target, seed, model);
    } else {
        if (cfg.pretrain_iters > 0) pretrain_backbone(model, ds, sp, cfg, seed);
        if (cache != nullptr) cache->store(target, seed, model);
    }

    model.arm = cfg.arm;
    if (cfg.arm != ArmKind::zero_shot) {
        TrainResult tr = train_tpl(model, ds, sp, cfg, seed);
        if (train_out != nullptr) *train_out = std::move(tr);
    }
    EvalResult r = evaluate(model, ds, sp, cfg);
    if (model_out != nullptr) *model_out = std::move(model);
    return r;
}

nlohmann::json RunSummary::to_json() const {
    nlohmann::json per_target = nlohmann::json::object();
    for (const auto& [m, accs] : per_target_acc) {
        nlohmann::json row{{"seeds", accs}, {"mean", per_target_mean.at(m)}};
        auto s = per_target_std.find(m);
        if (s != per_target_std.end()) row["std"] = s->second;
        per_target[std::to_string(m)] = row;
    }
    return nlohmann::json{{"arm", arm_name(arm)},
                          {"strategy", strategy_name(strategy)},
                          {"targets", targets},
                          {"per_target", per_target},
                          {"grand_mean", grand_mean}};
}

RunSummary run_protocol(const DomainDataset& ds, const TrainConfig& cfg,
                        std::vector<std::size_t> targets, BackboneCache* cache) {
    cfg.validate();
    if (targets.empty()) {
        for (std::size_t m = 1; m <= ds.cfg.domains; ++m) targets.push_back(m);
    }
    BackboneCache local;
    if (cache == nullptr) cache = &local;

    RunSummary s;
    s.arm = cfg.arm;
    s.strategy = cfg.strategy;
    s.targets = targets;
    double grand = 0.0;
    std::size_t n = 0;
    for (std::size_t target : targets) {
        auto& accs = s.per_target_acc[target];
        for (std::uint64_t seed : cfg.seeds) {
            accs.push_back(run_single(ds, target, seed, cfg, cache).accuracy);
        }
        s.per_target_mean[target] = mean_of(accs);
        if (accs.size() >= 2) s.per_target_std[target] = sample_std(accs);
        for (double a : accs) grand += a;
        n += accs.size();
    }
    s.grand_mean = grand / static_cast<double>(n);
    return s;
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& row : arms) a.push_back(row.to_json());
    nlohmann::json st = nlohmann::json::array();
    for (const auto& row : strategies) st.push_back(row.to_json());
    return nlohmann::json{{"arms", a}, {"strategies", st}};
}

std::string AblationReport::to_table() const {
    std::ostringstream os;
    auto print = [&os](const std::vector<RunSummary>& rows, const char* title, bool by_arm) {
        if (rows.empty()) return;
        os << title << "\n";
        for (const auto& r : rows) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%-16s",
                          by_arm ? arm_name(r.arm) : strategy_name(r.strategy));
            os << "  " << buf;
            for (std::size_t m : r.targets) {
                std::snprintf(buf, sizeof(buf), " %7.4f", r.per_target_mean.at(m));
                os << buf;
            }
            std::snprintf(buf, sizeof(buf), " | %7.4f", r.grand_mean);
            os << buf << "\n";
        }
    };
    print(arms, "arm accuracy per target domain", true);
    print(strategies, "strategy accuracy per target domain (tpl arm)", false);
    return os.str();
}

AblationReport run_ablation(const DomainDataset& ds, const TrainConfig& base,
                            std::vector<std::size_t> targets) {
    base.validate();
    if (targets.empty()) {
        for (std::size_t m = 1; m <= ds.cfg.domains; ++m) targets.push_back(m);
    }
    BackboneCache cache;
    AblationReport rep;

    for (ArmKind arm : all_arms()) {
        TrainConfig c = base;
        c.arm = arm;
        // Non-tpl arms have fixed weights; record them under the joint label.
        c.strategy = arm == ArmKind::tpl ? base.strategy : StrategyKind::joint;
        c.per_domain = arm == ArmKind::tpl && base.per_domain;
        rep.arms.push_back(run_protocol(ds, c, targets, &cache));
    }

    const RunSummary* tpl_row = nullptr;
    const RunSummary* joint_row = nullptr;
    for (const auto& r : rep.arms) {
        if (r.arm == ArmKind::tpl) tpl_row = &r;
        if (r.arm == ArmKind::joint) joint_row = &r;
    }
    for (StrategyKind kind : {StrategyKind::transitive, StrategyKind::joint,
                              StrategyKind::alternating, StrategyKind::two_stage,
                              StrategyKind::cumulative}) {
        if (kind == base.strategy && tpl_row != nullptr) {
            // The tpl arm row already ran under the base strategy.
            RunSummary copy = *tpl_row;
            copy.strategy = kind;
            rep.strategies.push_back(std::move(copy));
            continue;
        }
        if (kind == StrategyKind::joint && joint_row != nullptr) {
            // tpl under constant equal weights is exactly the joint arm.
            RunSummary copy = *joint_row;
            copy.arm = ArmKind::tpl;
            copy.strategy = kind;
            rep.strategies.push_back(std::move(copy));
            continue;
        }
        TrainConfig c = base;
        c.arm = ArmKind::tpl;
        c.strategy = kind;
        c.per_domain = kind == StrategyKind::transitive && base.per_domain;
        rep.strategies.push_back(run_protocol(ds, c, targets, &cache));
    }
    return rep;
}

}  // namespace tpl
