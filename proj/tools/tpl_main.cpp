// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Subcommands cover the full pipeline: gen-data,
// pretrain, train, eval, ablate, analyze. Every run directory receives a
// resolved_config.json sufficient for exact replay via --replay; exit codes
// are 0 success, 1 usage, 2 data/format, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tpl/analysis.hpp"
#include "tpl/harness.hpp"

#ifndef TPL_BUILD_ID
#define TPL_BUILD_ID "unknown"
#endif

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw tpl::DataError("cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw tpl::DataError(tpl::strf("bad JSON in ", path, ": ", e.what()));
    }
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw tpl::DataError("cannot write " + path.string());
    os << content;
    if (!os) throw tpl::DataError("write failed for " + path.string());
}

std::filesystem::path make_run_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw tpl::DataError(tpl::strf("cannot create ", dir, ": ", ec.message()));
    return p;
}

tpl::DomainDataset open_dataset(const std::string& stem) {
    if (stem.empty()) throw tpl::UsageError("--data is required (dataset file stem)");
    return tpl::load_dataset(stem);
}

void check_model_matches(const tpl::TplModel& model, const tpl::DomainDataset& ds) {
    if (model.cfg.image_size != ds.cfg.image_size || model.cfg.channels != ds.cfg.channels ||
        model.cfg.classes != ds.cfg.classes) {
        throw tpl::DataError(tpl::strf(
            "checkpoint was built for ", model.cfg.image_size, "x", model.cfg.image_size, "x",
            model.cfg.channels, " images with ", model.cfg.classes, " classes; dataset has ",
            ds.cfg.image_size, "x", ds.cfg.image_size, "x", ds.cfg.channels, " and ",
            ds.cfg.classes));
    }
}

tpl::ModelConfig default_model_for(const tpl::DomainDataset& ds) {
    tpl::ModelConfig mc;
    mc.image_size = ds.cfg.image_size;
    mc.channels = ds.cfg.channels;
    mc.classes = ds.cfg.classes;
    return mc;
}

// Options shared by the training-family commands, with --replay restoring a
// previous run's echoed configuration before explicit flags override it.
struct RunOpts {
    std::string data;
    std::string config;
    std::string replay;
    std::string out;
    std::size_t target = 1;
    std::uint64_t seed = 1;
};

void add_run_opts(CLI::App* cmd, RunOpts& o, bool with_target = true) {
    cmd->add_option("--data", o.data, "Dataset file stem (from gen-data)");
    cmd->add_option("--config", o.config, "Training config JSON file");
    cmd->add_option("--replay", o.replay,
                    "resolved_config.json of a previous run; restores its inputs");
    cmd->add_option("--out", o.out, "Output directory")->required();
    if (with_target) {
        cmd->add_option("--target-domain", o.target, "Held-out domain id (1-based)");
        cmd->add_option("--seed", o.seed, "Run seed");
    }
}

// Mirror of TrainConfig for flag-level overrides; only flags the user passed
// are copied onto the config.
struct TrainFlags {
    std::size_t pretrain_iters = 0, pretrain_batch = 0, pretrain_warmup = 0;
    double pretrain_lr = 0.0, pretrain_text_lock = 1.0;
    std::string arm, strategy;
    std::size_t iterations = 0, batch_size = 0, warmup = 0, checkpoint_every = 0;
    std::size_t probe_size = 0;
    double lr = 0.0, lr_floor = 0.0, theta = 0.0, val_fraction = 0.0;
    bool per_domain = false, ensemble = false, no_eval_average = false, prob_average = false;
    std::vector<std::uint64_t> seeds;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--pretrain-iters", f.pretrain_iters, "Stage-1 iterations");
    cmd->add_option("--pretrain-batch", f.pretrain_batch, "Stage-1 batch size");
    cmd->add_option("--pretrain-lr", f.pretrain_lr, "Stage-1 peak learning rate");
    cmd->add_option("--pretrain-warmup", f.pretrain_warmup, "Stage-1 warmup iterations");
    cmd->add_option("--pretrain-text-lock", f.pretrain_text_lock,
                    "Fraction of stage 1 after which the text tower is locked");
    cmd->add_option("--arm", f.arm,
                    "Prompt-design arm: zero_shot, language_only, vision_only, "
                    "joint_no_fusion, joint, tpl");
    cmd->add_option("--strategy", f.strategy,
                    "Weight strategy: transitive, joint, alternating, two_stage, cumulative");
    cmd->add_option("--iterations", f.iterations, "Stage-2 iterations");
    cmd->add_option("--batch-size", f.batch_size, "Stage-2 batch size");
    cmd->add_option("--lr", f.lr, "Stage-2 peak learning rate");
    cmd->add_option("--lr-floor", f.lr_floor, "Cosine floor for the stage-2 rate");
    cmd->add_option("--warmup", f.warmup, "Stage-2 warmup iterations");
    cmd->add_option("--theta", f.theta, "Distance normalizer (<= 0 auto-calibrates)");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "Iterations between checkpoints");
    cmd->add_option("--probe-size", f.probe_size, "Samples per distance probe");
    cmd->add_option("--val-fraction", f.val_fraction, "Held-out fraction per source cell");
    cmd->add_flag("--per-domain-weights", f.per_domain, "Per-domain weight pairs");
    cmd->add_flag("--ensemble", f.ensemble, "Gaussian checkpoint ensemble");
    cmd->add_flag("--no-eval-average", f.no_eval_average,
                  "Disable tuned/original score averaging at eval");
    cmd->add_flag("--prob-average", f.prob_average, "Average in probability space");
    cmd->add_option("--seeds", f.seeds, "Seed list (ablate)")->delimiter(',');
}

void apply_train_flags(const CLI::App* cmd, const TrainFlags& f, tpl::TrainConfig& cfg) {
    auto set = [&](const char* name) { return cmd->count(name) > 0; };
    if (set("--pretrain-iters")) cfg.pretrain_iters = f.pretrain_iters;
    if (set("--pretrain-batch")) cfg.pretrain_batch = f.pretrain_batch;
    if (set("--pretrain-lr")) cfg.pretrain_lr = f.pretrain_lr;
    if (set("--pretrain-warmup")) cfg.pretrain_warmup = f.pretrain_warmup;
    if (set("--pretrain-text-lock")) cfg.pretrain_text_lock = f.pretrain_text_lock;
    if (set("--arm")) cfg.arm = tpl::parse_arm(f.arm);
    if (set("--strategy")) cfg.strategy = tpl::parse_strategy(f.strategy);
    if (set("--iterations")) cfg.iterations = f.iterations;
    if (set("--batch-size")) cfg.batch_size = f.batch_size;
    if (set("--lr")) cfg.lr = f.lr;
    if (set("--lr-floor")) cfg.lr_floor = f.lr_floor;
    if (set("--warmup")) cfg.warmup = f.warmup;
    if (set("--theta")) cfg.theta = f.theta;
    if (set("--checkpoint-every")) cfg.checkpoint_every = f.checkpoint_every;
    if (set("--probe-size")) cfg.probe_size = f.probe_size;
    if (set("--val-fraction")) cfg.val_fraction = f.val_fraction;
    if (set("--per-domain-weights")) cfg.per_domain = true;
    if (set("--ensemble")) cfg.prompt_ensemble = true;
    if (set("--no-eval-average")) cfg.eval_average = false;
    if (set("--prob-average")) cfg.prob_average = true;
    if (set("--seeds")) cfg.seeds = f.seeds;
}

// Resolve the training config from --replay, then --config, then flags.
tpl::TrainConfig resolve_train_config(const CLI::App* cmd, const RunOpts& o,
                                      const TrainFlags& f, json* replay_echo) {
    if (!o.replay.empty() && !o.config.empty()) {
        throw tpl::UsageError("--replay and --config are mutually exclusive");
    }
    tpl::TrainConfig cfg;
    if (!o.replay.empty()) {
        json echo = read_json_file(o.replay);
        if (!echo.contains("train")) {
            throw tpl::DataError(o.replay + " is not a resolved_config.json (no train section)");
        }
        cfg = tpl::train_config_from_json(echo.at("train"));
        if (replay_echo != nullptr) *replay_echo = std::move(echo);
    } else if (!o.config.empty()) {
        cfg = tpl::train_config_from_json(read_json_file(o.config));
    }
    apply_train_flags(cmd, f, cfg);
    return cfg;
}

json base_echo(const std::string& command, const RunOpts& o, const tpl::TrainConfig& cfg,
               const tpl::ModelConfig& mc) {
    return json{{"command", command},
                {"data", o.data},
                {"target_domain", o.target},
                {"seed", o.seed},
                {"train", tpl::train_config_to_json(cfg)},
                {"model", tpl::model_config_to_json(mc)},
                {"build", TPL_BUILD_ID}};
}

void write_schedule_csv(const std::filesystem::path& path, const tpl::ScheduleState& sched) {
    std::ostringstream os;
    sched.write_history_csv(os);
    write_text_file(path, os.str());
}

json eval_to_json(const tpl::EvalResult& r) {
    return json{{"correct", r.correct}, {"total", r.total}, {"accuracy", r.accuracy}};
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

void cmd_gen_data(const tpl::DatasetConfig& dc, const std::string& out) {
    tpl::DomainDataset ds = tpl::generate_synthetic(dc);
    tpl::save_dataset(out, ds);
    std::cout << json{{"out", out},
                      {"count", ds.count()},
                      {"config_hash", ds.config_hash},
                      {"oracle_within", ds.oracle.within},
                      {"oracle_cross", ds.oracle.cross_mean}}
                     .dump(2)
              << "\n";
}

void cmd_pretrain(const RunOpts& o, const tpl::TrainConfig& cfg) {
    tpl::DomainDataset ds = open_dataset(o.data);
    tpl::SplitPlan sp = tpl::make_splits(ds, o.target, cfg.val_fraction, o.seed);
    tpl::TplModel model = tpl::TplModel::init(default_model_for(ds), o.seed);

    tpl::PretrainResult pr = tpl::pretrain_backbone(model, ds, sp, cfg, o.seed);

    const auto dir = make_run_dir(o.out);
    json echo = base_echo("pretrain", o, cfg, model.cfg);
    write_text_file(dir / "resolved_config.json", echo.dump(2) + "\n");
    model.save((dir / "backbone").string(),
               json{{"stage", "pretrain"}, {"target_domain", o.target}, {"seed", o.seed}});
    json result{{"final_loss", pr.final_loss},
                {"source_train_accuracy", pr.source_train_accuracy},
                {"loss_trace", pr.loss_trace}};
    write_text_file(dir / "pretrain.json", result.dump(2) + "\n");
    std::cout << result.dump(2) << "\n";
}

void cmd_train(const RunOpts& o, const tpl::TrainConfig& cfg, const std::string& backbone,
               bool dump_features) {
    tpl::DomainDataset ds = open_dataset(o.data);
    tpl::SplitPlan sp = tpl::make_splits(ds, o.target, cfg.val_fraction, o.seed);

    tpl::TplModel model;
    tpl::TrainResult tr;
    tpl::EvalResult r;
    if (!backbone.empty()) {
        model = tpl::TplModel::load(backbone);
        check_model_matches(model, ds);
        model.arm = cfg.arm;
        tr = tpl::train_tpl(model, ds, sp, cfg, o.seed);
        r = tpl::evaluate(model, ds, sp, cfg);
    } else {
        r = tpl::run_single(ds, o.target, o.seed, cfg, nullptr, &tr, &model);
    }

    const auto dir = make_run_dir(o.out);
    json echo = base_echo("train", o, cfg, model.cfg);
    echo["backbone"] = backbone;
    echo["dump_features"] = dump_features;
    write_text_file(dir / "resolved_config.json", echo.dump(2) + "\n");

    model.save((dir / "model").string(),
               json{{"stage", "train"}, {"target_domain", o.target}, {"seed", o.seed}});
    json result{{"arm", tpl::arm_name(cfg.arm)},
                {"strategy", tpl::strategy_name(cfg.strategy)},
                {"target_domain", o.target},
                {"seed", o.seed},
                {"accuracy", r.accuracy},
                {"correct", r.correct},
                {"total", r.total},
                {"best_val", tr.best_val},
                {"best_iter", tr.best_iter},
                {"ensembled", tr.ensembled},
                {"loss_trace", tr.loss_trace},
                {"val_trace", tr.val_trace}};
    write_text_file(dir / "result.json", result.dump(2) + "\n");
    if (tr.schedule.has_value()) {
        write_schedule_csv(dir / "schedule.csv", *tr.schedule);
    }
    if (dump_features) {
        tpl::FeatureDump dump;
        auto add_rows = [&](const std::vector<std::size_t>& idx, const char* tag) {
            for (const tpl::FeaturePoint& p : tpl::extract_features(model, ds, idx)) {
                dump.append(p, tag, cfg.iterations);
            }
        };
        add_rows(sp.all_train(), "train");
        add_rows(sp.all_val(), "val");
        add_rows(sp.target_indices(ds), "target");
        tpl::save_dump((dir / "features").string(), dump);
    }
    std::cout << result.dump(2) << "\n";
}

void cmd_eval(const std::string& data, const std::string& model_stem,
              const std::string& backbone_stem, std::size_t target, std::uint64_t seed,
              const tpl::TrainConfig& cfg) {
    if (model_stem.empty() == backbone_stem.empty()) {
        throw tpl::UsageError("eval: pass exactly one of --model or --backbone");
    }
    tpl::DomainDataset ds = open_dataset(data);
    tpl::SplitPlan sp = tpl::make_splits(ds, target, cfg.val_fraction, seed);

    tpl::TplModel model = tpl::TplModel::load(model_stem.empty() ? backbone_stem : model_stem);
    check_model_matches(model, ds);
    tpl::TrainConfig eval_cfg = cfg;
    if (!backbone_stem.empty()) {
        model.arm = tpl::ArmKind::zero_shot;  // untuned checkpoint: plain text
    }
    eval_cfg.arm = model.arm;
    tpl::EvalResult r = tpl::evaluate(model, ds, sp, eval_cfg);
    json out = eval_to_json(r);
    out["arm"] = tpl::arm_name(model.arm);
    out["target_domain"] = target;
    std::cout << out.dump(2) << "\n";
}

void cmd_ablate(const RunOpts& o, const tpl::TrainConfig& cfg,
                const std::vector<std::size_t>& targets) {
    tpl::DomainDataset ds = open_dataset(o.data);
    tpl::AblationReport rep = tpl::run_ablation(ds, cfg, targets);

    const auto dir = make_run_dir(o.out);
    json echo = base_echo("ablate", o, cfg, default_model_for(ds));
    echo.erase("target_domain");
    echo.erase("seed");
    echo["targets"] = targets;
    write_text_file(dir / "resolved_config.json", echo.dump(2) + "\n");
    write_text_file(dir / "ablation.json", rep.to_json().dump(2) + "\n");
    const std::string table = rep.to_table();
    write_text_file(dir / "ablation.txt", table);
    std::cout << table;
}

void cmd_analyze(const std::string& dump_stem, const std::string& schedule_csv,
                 std::size_t mds_max, const std::string& out) {
    if (dump_stem.empty()) throw tpl::UsageError("--dump is required (feature dump stem)");
    tpl::FeatureDump dump = tpl::load_dump(dump_stem);
    if (dump.count() == 0) throw tpl::DataError("feature dump is empty");

    tpl::ReportInputs in;
    in.invariance = tpl::domain_invariance_metric(dump);
    in.separability = tpl::class_separability_metric(dump);

    // MDS cost is quadratic in rows; stride-sample large dumps.
    tpl::FeatureDump sampled;
    const std::size_t stride = dump.count() > mds_max ? (dump.count() + mds_max - 1) / mds_max
                                                      : 1;
    for (std::size_t i = 0; i < dump.count(); i += stride) {
        sampled.append(dump.points[i], dump.splits[i], dump.iterations[i]);
    }
    in.dump = &sampled;
    in.embedding = tpl::classical_mds(sampled);

    if (!schedule_csv.empty()) {
        std::ifstream is(schedule_csv);
        if (!is) throw tpl::DataError("cannot open " + schedule_csv);
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            tpl::ScheduleRecord rec;
            char* p = nullptr;
            rec.t = std::strtoull(line.c_str(), &p, 10);
            rec.d = std::strtod(p + 1, &p);
            rec.lambda = std::strtod(p + 1, &p);
            rec.w_v = std::strtod(p + 1, &p);
            rec.w_s = std::strtod(p + 1, nullptr);
            in.history.push_back(rec);
        }
    }

    auto written = tpl::export_report(in, out);
    json echo{{"command", "analyze"},
              {"dump", dump_stem},
              {"schedule", schedule_csv},
              {"mds_max", mds_max},
              {"build", TPL_BUILD_ID}};
    write_text_file(std::filesystem::path(out) / "resolved_config.json", echo.dump(2) + "\n");
    json listing{{"written", written},
                 {"invariance_mean", in.invariance.mean},
                 {"separability_mean", in.separability.mean}};
    std::cout << listing.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Flag schema dump for tooling.

json option_schema(const CLI::Option* opt) {
    return json{{"name", opt->get_name()},
                {"description", opt->get_description()},
                {"required", opt->get_required()},
                {"type", opt->get_type_name()},
                {"default", opt->get_default_str()}};
}

json app_schema(const CLI::App* app) {
    json options = json::array();
    for (const CLI::Option* opt : app->get_options()) options.push_back(option_schema(opt));
    json subs = json::array();
    for (const CLI::App* sub : app->get_subcommands({})) subs.push_back(app_schema(sub));
    json out{{"name", app->get_name()}, {"description", app->get_description()},
             {"options", options}};
    if (!subs.empty()) out["subcommands"] = subs;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transitive prompt learning: dual-encoder pretraining, prompt tuning, "
                 "leave-one-domain-out evaluation, ablations, and feature analysis"};
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.require_subcommand(0, 1);

    bool help_json = false;
    app.add_flag("--help-json", help_json, "Print the flag schema as JSON and exit");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Synthesize a multi-domain dataset");
    tpl::DatasetConfig dc;
    std::string gen_out = "dataset";
    gen->add_option("--classes", dc.classes, "Number of classes");
    gen->add_option("--domains", dc.domains, "Number of domains (sources + target)");
    gen->add_option("--per-cell", dc.per_cell, "Samples per (class, domain) cell");
    gen->add_option("--image-size", dc.image_size, "Image height/width in pixels");
    gen->add_option("--channels", dc.channels, "Color channels");
    gen->add_option("--seed", dc.seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output file stem");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "Stage 1: pretrain the dual encoder");
    RunOpts pre_opts;
    TrainFlags pre_flags;
    add_run_opts(pre, pre_opts);
    add_train_flags(pre, pre_flags);

    // train
    auto* tr = app.add_subcommand("train", "Stage 2: tune prompts on the frozen backbone");
    RunOpts tr_opts;
    TrainFlags tr_flags;
    std::string tr_backbone;
    bool tr_dump = false;
    add_run_opts(tr, tr_opts);
    add_train_flags(tr, tr_flags);
    tr->add_option("--backbone", tr_backbone,
                   "Pretrained checkpoint stem (omit to pretrain in-line)");
    tr->add_flag("--dump-features", tr_dump, "Write a TPLF feature dump of the tuned model");

    // eval
    auto* ev = app.add_subcommand("eval", "Classify a held-out target domain");
    std::string ev_data, ev_model, ev_backbone, ev_config;
    std::size_t ev_target = 1;
    std::uint64_t ev_seed = 1;
    ev->add_option("--data", ev_data, "Dataset file stem");
    ev->add_option("--model", ev_model, "Tuned checkpoint stem");
    ev->add_option("--backbone", ev_backbone, "Untuned checkpoint stem (zero-shot)");
    ev->add_option("--config", ev_config, "Training config JSON (scoring options)");
    ev->add_option("--target-domain", ev_target, "Held-out domain id (1-based)");
    ev->add_option("--seed", ev_seed, "Split seed");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run the prompt-design and strategy grids");
    RunOpts ab_opts;
    TrainFlags ab_flags;
    std::vector<std::size_t> ab_targets;
    add_run_opts(ab, ab_opts, /*with_target=*/false);
    add_train_flags(ab, ab_flags);
    ab->add_option("--targets", ab_targets, "Target domains (default: all)")->delimiter(',');

    // analyze
    auto* an = app.add_subcommand("analyze", "Metrics, MDS, and figures from a feature dump");
    std::string an_dump, an_schedule, an_out;
    std::size_t an_mds_max = 512;
    an->add_option("--dump", an_dump, "Feature dump stem (from train --dump-features)");
    an->add_option("--schedule", an_schedule, "schedule.csv from a training run");
    an->add_option("--mds-max", an_mds_max, "Row cap for the MDS embedding");
    an->add_option("--out", an_out, "Output directory")->required();
    std::string an_replay;
    an->add_option("--replay", an_replay, "resolved_config.json of a previous analyze run");

    try {
        app.parse(argc, argv);

        if (help_json) {
            std::cout << app_schema(&app).dump(2) << "\n";
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cout << app.help();
            return 0;
        }

        if (gen->parsed()) {
            cmd_gen_data(dc, gen_out);
        } else if (pre->parsed()) {
            tpl::TrainConfig cfg = resolve_train_config(pre, pre_opts, pre_flags, nullptr);
            cfg.validate();
            cmd_pretrain(pre_opts, cfg);
        } else if (tr->parsed()) {
            json echo;
            tpl::TrainConfig cfg = resolve_train_config(tr, tr_opts, tr_flags, &echo);
            if (!echo.is_null()) {
                if (tr_opts.data.empty()) tr_opts.data = echo.value("data", "");
                if (tr->count("--target-domain") == 0) {
                    tr_opts.target = echo.value("target_domain", tr_opts.target);
                }
                if (tr->count("--seed") == 0) tr_opts.seed = echo.value("seed", tr_opts.seed);
                if (tr->count("--backbone") == 0) tr_backbone = echo.value("backbone", "");
                if (tr->count("--dump-features") == 0) {
                    tr_dump = echo.value("dump_features", false);
                }
            }
            cfg.validate();
            cmd_train(tr_opts, cfg, tr_backbone, tr_dump);
        } else if (ev->parsed()) {
            tpl::TrainConfig cfg;
            if (!ev_config.empty()) {
                cfg = tpl::train_config_from_json(read_json_file(ev_config));
            }
            cfg.validate();
            cmd_eval(ev_data, ev_model, ev_backbone, ev_target, ev_seed, cfg);
        } else if (ab->parsed()) {
            json echo;
            tpl::TrainConfig cfg = resolve_train_config(ab, ab_opts, ab_flags, &echo);
            if (!echo.is_null()) {
                if (ab_opts.data.empty()) ab_opts.data = echo.value("data", "");
                if (ab->count("--targets") == 0 && echo.contains("targets")) {
                    ab_targets = echo.at("targets").get<std::vector<std::size_t>>();
                }
            }
            cfg.validate();
            cmd_ablate(ab_opts, cfg, ab_targets);
        } else if (an->parsed()) {
            if (!an_replay.empty()) {
                json echo = read_json_file(an_replay);
                if (an_dump.empty()) an_dump = echo.value("dump", "");
                if (an->count("--schedule") == 0) an_schedule = echo.value("schedule", "");
                if (an->count("--mds-max") == 0) {
                    an_mds_max = echo.value("mds_max", an_mds_max);
                }
            }
            cmd_analyze(an_dump, an_schedule, an_mds_max, an_out);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const tpl::UsageError& e) {
        std::cerr << "tpl: usage error: " << e.what() << "\n";
        return 1;
    } catch (const tpl::NumericError& e) {
        std::cerr << "tpl: numeric error: " << e.what() << "\n";
        return 3;
    } catch (const tpl::Error& e) {
        std::cerr << "tpl: data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "tpl: data error: " << e.what() << "\n";
        return 2;
    }
}
