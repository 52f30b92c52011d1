#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wscos/cli.hpp"
#include "wscos/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wscos;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    bool force = false;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "run-config JSON file");
    sub->add_option("--set", c.sets, "key.path=value config override (repeatable)");
    sub->add_option("--out", c.out, "output run directory (default runs/<timestamp>-<command>)");
    sub->add_flag("--force", c.force, "allow writing into a non-empty output directory");
    c.seed_opt = sub->add_option("--seed", c.seed, "master seed");
}

RunConfig build_config(const Common& c) {
    json j;
    if (c.config.empty()) {
        j = run_config_json(RunConfig{});
    } else {
        std::ifstream f(c.config);
        if (!f) throw NotFoundError("config file not found: " + c.config);
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw FormatError("config: invalid JSON in " + c.config + ": " + e.what());
        }
        parse_run_config(j);  // reject unknown keys before patching
    }
    for (const auto& s : c.sets) j = apply_override(j, s);
    RunConfig cfg = parse_run_config(j);
    if (c.seed_opt->count()) cfg.seed = c.seed;
    return cfg;
}

fs::path out_dir(const Common& c, const std::string& command) {
    return c.out.empty() ? default_run_dir(command) : fs::path(c.out);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        const size_t comma = s.find(',', start);
        const std::string item = s.substr(start, comma - start);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly-supervised concealed-object segmentation pipeline"};
    app.set_version_flag("--version", std::string("wscos ") + kVersion);
    app.require_subcommand(1);

    Common cg, cr, ct, ce, ca;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic camouflage dataset");
    add_common(gen, cg);
    int g_train = 0, g_test = 0, g_size = 0, g_objects = 0;
    double g_contrast = 0;
    std::string g_annotation;
    auto* g_train_o = gen->add_option("--train", g_train, "train sample count");
    auto* g_test_o = gen->add_option("--test", g_test, "test sample count");
    auto* g_size_o = gen->add_option("--size", g_size, "square image size (divisible by 8)");
    auto* g_obj_o = gen->add_option("--objects", g_objects, "exact object count per image");
    auto* g_con_o = gen->add_option("--contrast", g_contrast, "fg/bg texture gap in [0,0.5]");
    auto* g_ann_o = gen->add_option("--annotation", g_annotation, "points or scribble")
                        ->check(CLI::IsMember({"points", "scribble"}));

    CLI::App* refine = app.add_subcommand("refine", "generate weighted pseudo-labels");
    add_common(refine, cr);
    std::string r_data, r_provider, r_store;
    int r_k = 0, r_jitter = 0, r_jobs = 1;
    double r_dropout = 0, r_fp = 0;
    bool r_no_fusion = false, r_no_plw = false, r_no_ils = false;
    refine->add_option("--data", r_data, "dataset directory (from gen)")->required();
    auto* r_k_o = refine->add_option("--k", r_k, "augmented views per image");
    auto* r_prov_o = refine->add_option("--provider", r_provider, "oracle or store")
                         ->check(CLI::IsMember({"oracle", "store"}));
    auto* r_store_o = refine->add_option("--mask-store", r_store, "mask directory for store provider");
    auto* r_jit_o = refine->add_option("--jitter", r_jitter, "oracle boundary jitter radius");
    auto* r_drop_o = refine->add_option("--dropout", r_dropout, "oracle blob dropout rate");
    auto* r_fp_o = refine->add_option("--fp", r_fp, "oracle spurious-blob rate");
    refine->add_flag("--no-fusion", r_no_fusion, "single view instead of the fused ensemble");
    refine->add_flag("--no-plw", r_no_plw, "skip entropy pixel weighting");
    refine->add_flag("--no-ils", r_no_ils, "skip image-level selection");
    refine->add_option("--jobs", r_jobs, "parallel refinement workers");

    CLI::App* train_cmd = app.add_subcommand("train", "train the segmenter on pseudo-labels");
    add_common(train_cmd, ct);
    std::string t_data, t_labels, t_mfg;
    int t_epochs = 0, t_batch = 0, t_repeat = 0;
    double t_lr = 0;
    bool t_vary = false;
    train_cmd->add_option("--data", t_data, "dataset directory")->required();
    train_cmd->add_option("--labels", t_labels, "pseudo-label directory (from refine)")->required();
    auto* t_epochs_o = train_cmd->add_option("--epochs", t_epochs, "training epochs");
    auto* t_batch_o = train_cmd->add_option("--batch", t_batch, "minibatch size");
    auto* t_lr_o = train_cmd->add_option("--lr", t_lr, "learning rate");
    auto* t_mfg_o = train_cmd->add_option("--mfg", t_mfg, "on or off (off = w/o grouping arm)")
                        ->check(CLI::IsMember({"on", "off"}));
    auto* t_rep_o = train_cmd->add_option("--repeat", t_repeat, "independent training runs");
    train_cmd->add_flag("--vary-points", t_vary, "resample point annotations per repeat");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on a split");
    add_common(eval_cmd, ce);
    std::string e_data, e_split;
    std::vector<std::string> e_ckpts;
    eval_cmd->add_option("--data", e_data, "dataset directory")->required();
    eval_cmd->add_option("--checkpoint", e_ckpts, "checkpoint file (repeatable)")->required();
    auto* e_split_o = eval_cmd->add_option("--split", e_split, "train or test")
                          ->check(CLI::IsMember({"train", "test"}));

    CLI::App* ablate = app.add_subcommand("ablate", "run ablation arms over several seeds");
    add_common(ablate, ca);
    std::string a_arms, a_seeds;
    int a_jobs = 1, a_train = 0, a_test = 0, a_size = 0, a_epochs = 0;
    ablate->add_option("--arms", a_arms,
                       "comma list: baseline,fusion,plw,ils,full,wo_mfg,k<N>");
    ablate->add_option("--seeds", a_seeds, "comma list of seeds");
    ablate->add_option("--jobs", a_jobs, "parallel refinement workers");
    auto* a_train_o = ablate->add_option("--train", a_train, "train sample count");
    auto* a_test_o = ablate->add_option("--test", a_test, "test sample count");
    auto* a_size_o = ablate->add_option("--size", a_size, "square image size");
    auto* a_epochs_o = ablate->add_option("--epochs", a_epochs, "training epochs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            RunConfig cfg = build_config(cg);
            if (g_train_o->count()) cfg.dataset.train_count = g_train;
            if (g_test_o->count()) cfg.dataset.test_count = g_test;
            if (g_size_o->count()) cfg.dataset.height = cfg.dataset.width = g_size;
            if (g_obj_o->count()) cfg.dataset.min_objects = cfg.dataset.max_objects = g_objects;
            if (g_con_o->count()) cfg.dataset.contrast = g_contrast;
            if (g_ann_o->count()) cfg.dataset.annotation = g_annotation;
            const fs::path out = out_dir(cg, "gen");
            const GenSummary s = cmd_gen(cfg, out, cg.force);
            std::cout << "dataset: " << s.train_count << " train + " << s.test_count
                      << " test samples, " << s.height << "x" << s.width << ", seed " << s.seed
                      << "\n  -> " << out.string() << "\n";
        } else if (*refine) {
            RunConfig cfg = build_config(cr);
            if (r_k_o->count()) cfg.pipeline.k = r_k;
            if (r_prov_o->count()) cfg.pipeline.provider = r_provider;
            if (r_store_o->count()) cfg.pipeline.mask_store = r_store;
            if (r_jit_o->count()) cfg.pipeline.boundary_jitter = r_jitter;
            if (r_drop_o->count()) cfg.pipeline.dropout_rate = r_dropout;
            if (r_fp_o->count()) cfg.pipeline.fp_rate = r_fp;
            if (r_no_fusion) cfg.pipeline.fusion = false;
            if (r_no_plw) cfg.pipeline.pixel_weighting = false;
            if (r_no_ils) cfg.pipeline.image_selection = false;
            const fs::path out = out_dir(cr, "refine");
            const RefineSummary s = cmd_refine(cfg, r_data, out, cr.force, r_jobs);
            std::cout << "refine: " << s.total << " images, kept " << s.kept << ", rejected "
                      << s.rejected << ", skipped " << s.skipped << "\n";
            std::printf("  mean U_a %.4f, mean U_r %.4f\n", s.mean_u_a, s.mean_u_r);
            for (const auto& [id, reason] : s.skipped_ids)
                std::cout << "  skipped " << id << ": " << reason << "\n";
            std::cout << "  -> " << out.string() << "\n";
        } else if (*train_cmd) {
            RunConfig cfg = build_config(ct);
            if (t_epochs_o->count()) cfg.train.epochs = t_epochs;
            if (t_batch_o->count()) cfg.train.batch_size = t_batch;
            if (t_lr_o->count()) cfg.train.learning_rate = t_lr;
            if (t_mfg_o->count()) cfg.mfg.enabled = t_mfg == "on";
            if (t_rep_o->count()) cfg.train.repeat = t_repeat;
            if (t_vary) cfg.train.vary_points = true;
            const fs::path out = out_dir(ct, "train");
            const TrainSummary s = cmd_train(cfg, t_data, t_labels, out, ct.force);
            std::cout << "train: " << s.used << " samples (" << s.rejected << " pce-only, "
                      << s.missing << " missing)\n";
            for (size_t r = 0; r < s.losses.size(); ++r)
                std::printf("  run %zu: %d epochs, final loss %.6f\n", r,
                            static_cast<int>(s.losses[r].size()), s.losses[r].back());
            for (const auto& c : s.checkpoints)
                std::cout << "  checkpoint -> " << c.string() << "\n";
        } else if (*eval_cmd) {
            RunConfig cfg = build_config(ce);
            if (e_split_o->count()) cfg.eval.split = e_split;
            std::vector<fs::path> ckpts(e_ckpts.begin(), e_ckpts.end());
            const fs::path out = out_dir(ce, "eval");
            const EvalSummary s = cmd_eval(cfg, e_data, ckpts, out, ce.force);
            std::cout << metrics_table(s.report);
            if (s.run_aggregates.size() > 1)
                std::printf("spread over %zu runs: mae %.4f  f_beta %.4f  iou %.4f\n",
                            s.run_aggregates.size(), s.spread.mae, s.spread.f_beta, s.spread.iou);
            std::cout << "  -> " << (out / "metrics.json").string() << "\n";
        } else if (*ablate) {
            RunConfig cfg = build_config(ca);
            if (!a_arms.empty()) cfg.ablation.arms = split_csv(a_arms);
            if (!a_seeds.empty()) {
                cfg.ablation.seeds.clear();
                for (const auto& s : split_csv(a_seeds)) {
                    try {
                        cfg.ablation.seeds.push_back(std::stoull(s));
                    } catch (const std::exception&) {
                        throw ContractViolation("ablate: bad seed '" + s + "'");
                    }
                }
            }
            if (a_train_o->count()) cfg.dataset.train_count = a_train;
            if (a_test_o->count()) cfg.dataset.test_count = a_test;
            if (a_size_o->count()) cfg.dataset.height = cfg.dataset.width = a_size;
            if (a_epochs_o->count()) cfg.train.epochs = a_epochs;
            const fs::path out = out_dir(ca, "ablate");
            const std::vector<AblationArm> arms = cmd_ablate(cfg, out, ca.force, a_jobs);
            std::cout << ablation_table(arms) << "  -> " << out.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error [" << error_category(e) << "]: " << e.what() << "\n";
        return error_exit_code(e);
    }
    return 0;
}
