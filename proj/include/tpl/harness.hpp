// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Leave-one-domain-out training and evaluation. Stage 1 pretrains the dual
// encoder on pooled source domains; stage 2 freezes it and tunes prompt,
// generator, and gate parameters under a scheduled blend of the
// domain-agnostic and domain-specific objectives. Arms ablate the prompt
// design; strategies ablate the weight schedule.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tpl/data.hpp"
#include "tpl/encoders.hpp"
#include "tpl/prompting.hpp"
#include "tpl/scheduler.hpp"

namespace tpl {

// Prompt-design arms, weakest to strongest.
enum class ArmKind {
    zero_shot,        // frozen backbone, plain text; no tuning
    language_only,    // generated text prompts only (trains the generator)
    vision_only,      // deep vision prompts only (trains the prompts)
    joint_no_fusion,  // both prompt kinds, no fusion gates
    joint,            // full model, fixed equal loss weights
    tpl,              // full model, scheduled loss weights
};

const char* arm_name(ArmKind arm);
ArmKind parse_arm(const std::string& name);
std::vector<ArmKind> all_arms();

// Role ownership: which parameter roles an arm updates in stage 2. The
// backbone is never trainable here.
bool arm_trains_role(ArmKind arm, const std::string& role);
bool arm_uses_vision_prompts(ArmKind arm);
bool arm_uses_generator(ArmKind arm);
bool arm_uses_fusion(ArmKind arm);

struct TrainConfig {
    // Stage 1: backbone pretraining on pooled source-domain training cells.
    std::size_t pretrain_iters = 600;
    std::size_t pretrain_batch = 32;
    double pretrain_lr = 1e-3;
    std::size_t pretrain_warmup = 50;  // clamped to pretrain_iters / 2
    // Fraction of pretraining after which the text tower stops updating while
    // the image tower keeps training against the locked text anchors. The
    // leftover image-text alignment slack is what prompt tuning later closes,
    // mirroring two-tower models whose text is generic for any given
    // deployment distribution. 1.0 trains both towers to the end.
    double pretrain_text_lock = 0.5;

    // Stage 2: prompt tuning.
    ArmKind arm = ArmKind::tpl;
    StrategyKind strategy = StrategyKind::transitive;
    std::size_t iterations = 2000;
    std::size_t batch_size = 32;
    double lr = 3e-5;
    double lr_floor = 0.0;
    std::size_t warmup = 0;  // clamped to iterations / 2
    double theta = 0.0;  // <= 0: calibrated from the first measured distance
    std::size_t checkpoint_every = 100;
    std::size_t probe_size = 512;     // samples for distance probes
    bool per_domain = false;          // per-domain weight pairs (transitive only)
    bool prompt_ensemble = false;     // Gaussian checkpoint ensemble
    bool eval_average = true;         // average tuned and original scores
    bool prob_average = false;        // average in probability space
    double val_fraction = 0.2;
    std::vector<std::uint64_t> seeds = {1, 2, 3};

    void validate() const;
};

// Strict round-trip: unknown keys are rejected, missing keys keep defaults.
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// The full trainable bundle: dual encoder plus prompt generator and gates.
struct TplModel {
    ModelConfig cfg;
    ArmKind arm = ArmKind::tpl;
    DualEncoder encoder;
    DomainPromptGenerator generator;
    FusionGates gates;

    static TplModel init(const ModelConfig& cfg, std::uint64_t seed);
    std::vector<ParamRef> params();

    void save(const std::string& stem, const nlohmann::json& extra_meta = {});
    static TplModel load(const std::string& stem);
};

struct PretrainResult {
    std::vector<double> loss_trace;      // mean batch loss per checkpoint window
    double final_loss = 0.0;
    double source_train_accuracy = 0.0;  // zero-shot accuracy on a train probe
};

// Stage 1. Trains backbone-role parameters of model.encoder in place on
// source-domain training samples; prompts, generator, and gates are untouched.
PretrainResult pretrain_backbone(TplModel& model, const DomainDataset& ds,
                                 const SplitPlan& sp, const TrainConfig& cfg,
                                 std::uint64_t seed);

struct TrainResult {
    std::optional<ScheduleState> schedule;  // checkpoint history (d, lambda, weights)
    std::vector<double> loss_trace;   // mean batch loss per checkpoint window
    std::vector<double> val_trace;    // validation accuracy at checkpoints
    double best_val = 0.0;            // best over trained checkpoints (t > 0)
    std::size_t best_iter = 0;        // earliest such checkpoint
    bool ensembled = false;
};

// Stage 2. Tunes the arm's parameter roles in place; restores the best
// validation snapshot (or the checkpoint ensemble) before returning.
TrainResult train_tpl(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                      const TrainConfig& cfg, std::uint64_t seed);

struct EvalResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0.0;
};

// Classify the target-domain samples (or an explicit index set) with the
// model's arm. Domain-specific text is conditioned on the evaluated images
// themselves: v-bar averages the generated prompts over each evaluated
// domain's unlabeled samples, so text adapts to unseen domains.
EvalResult evaluate(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                    const TrainConfig& cfg);
EvalResult evaluate_subset(TplModel& model, const DomainDataset& ds, const SplitPlan& sp,
                           const TrainConfig& cfg, std::span<const std::size_t> indices);

// Eval-space image features of the given samples under the model's arm, as
// scheduler feature points (used by distance probes and reports).
std::vector<FeaturePoint> extract_features(TplModel& model, const DomainDataset& ds,
                                           std::span<const std::size_t> indices);

// Argmax with ties resolved toward the lowest class id; index i scores class
// i + 1.
std::size_t pick_class(std::span<const double> logits);

// Elementwise mean of tuned and original scores, either on the cosine/tau
// logits or on their softmax probabilities.
std::vector<double> average_scores(std::span<const double> tuned,
                                   std::span<const double> original, bool prob_space);

// Reusable stage-1 results keyed by (target domain, seed): backbone tensors
// are copied out after pretraining and copied back in for later runs.
class BackboneCache {
public:
    bool has(std::size_t target, std::uint64_t seed) const;
    void store(std::size_t target, std::uint64_t seed, TplModel& model);
    void restore(std::size_t target, std::uint64_t seed, TplModel& model) const;

private:
    std::map<std::pair<std::size_t, std::uint64_t>, std::map<std::string, Tensor>> slots_;
};

// One full run for one (target, seed): stage 1 (or cache hit), stage 2 when
// the arm trains anything, then target-domain evaluation.
EvalResult run_single(const DomainDataset& ds, std::size_t target, std::uint64_t seed,
                      const TrainConfig& cfg, BackboneCache* cache = nullptr,
                      TrainResult* train_out = nullptr, TplModel* model_out = nullptr);

struct RunSummary {
    ArmKind arm = ArmKind::tpl;
    StrategyKind strategy = StrategyKind::transitive;
    std::vector<std::size_t> targets;
    std::map<std::size_t, std::vector<double>> per_target_acc;  // per seed
    std::map<std::size_t, double> per_target_mean;
    std::map<std::size_t, double> per_target_std;  // sample std; empty for < 2 seeds
    double grand_mean = 0.0;

    nlohmann::json to_json() const;
};

// cfg.seeds x targets runs of one configuration. Targets defaults to every
// domain in the dataset when empty.
RunSummary run_protocol(const DomainDataset& ds, const TrainConfig& cfg,
                        std::vector<std::size_t> targets = {},
                        BackboneCache* cache = nullptr);

struct AblationReport {
    std::vector<RunSummary> arms;        // all six arms, base strategy semantics
    std::vector<RunSummary> strategies;  // tpl arm under each strategy

    nlohmann::json to_json() const;
    std::string to_table() const;  // aligned text table
};

// Full ablation grid. Stage-1 runs are shared across rows via the cache, and
// rows that coincide (tpl/transitive, joint/joint-strategy) are run once.
AblationReport run_ablation(const DomainDataset& ds, const TrainConfig& base,
                            std::vector<std::size_t> targets = {});

}  // namespace tpl
