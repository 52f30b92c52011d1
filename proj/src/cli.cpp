#include "wscos/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "wscos/dataset.hpp"
#include "wscos/errors.hpp"
#include "wscos/model.hpp"
#include "wscos/provider.hpp"
#include "wscos/pseudolabel.hpp"
#include "wscos/rng.hpp"

namespace wscos {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ContractViolation("config: " + (prefix.empty() ? std::string("document") : prefix) +
                                " must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known) throw ContractViolation("config: unknown key " + prefix + item.key());
    }
}

template <typename T>
void read_field(const json& j, const std::string& prefix, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception&) {
        throw ContractViolation("config: bad value for " + prefix + key);
    }
}

json section_or_empty(const json& j, const char* key) {
    return j.contains(key) ? j.at(key) : json::object();
}

GenConfig split_gen_config(const RunConfig& cfg, const std::string& split, int count) {
    GenConfig g;
    g.height = cfg.dataset.height;
    g.width = cfg.dataset.width;
    g.count = count;
    g.min_objects = cfg.dataset.min_objects;
    g.max_objects = cfg.dataset.max_objects;
    g.contrast = cfg.dataset.contrast;
    g.annotation = cfg.dataset.annotation;
    g.scribble_length = cfg.dataset.scribble_length;
    g.seed = Rng::mix(cfg.seed, Rng::hash_string(split));
    return g;
}

PipelineConfig pipeline_config(const RunConfig& cfg) {
    PipelineConfig p;
    p.K = cfg.pipeline.k;
    p.tau_a = cfg.pipeline.tau_a;
    p.tau_r = cfg.pipeline.tau_r;
    p.theta_h = cfg.pipeline.theta_h;
    p.seed = cfg.seed;
    p.fusion = cfg.pipeline.fusion;
    p.pixel_weighting = cfg.pipeline.pixel_weighting;
    p.image_selection = cfg.pipeline.image_selection;
    return p;
}

std::unique_ptr<MaskProvider> make_provider(const RunConfig& cfg,
                                            const std::vector<DatasetSample>& samples) {
    if (cfg.pipeline.provider == "oracle") {
        std::unordered_map<std::string, Grid> gts;
        for (const auto& s : samples) gts.emplace(s.id, s.gt);
        OracleConfig oc;
        oc.boundary_jitter = cfg.pipeline.boundary_jitter;
        oc.dropout_rate = cfg.pipeline.dropout_rate;
        oc.fp_rate = cfg.pipeline.fp_rate;
        oc.seed = cfg.seed;
        validate_oracle_config(oc);
        return std::make_unique<OracleProvider>(std::move(gts), oc);
    }
    if (cfg.pipeline.provider == "store") {
        if (cfg.pipeline.mask_store.empty())
            throw ContractViolation("refine: store provider needs pipeline.mask_store");
        return std::make_unique<FileStoreProvider>(cfg.pipeline.mask_store);
    }
    throw ContractViolation("refine: unknown provider '" + cfg.pipeline.provider + "'");
}

TrainConfig train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.batch_size = cfg.train.batch_size;
    t.learning_rate = cfg.train.learning_rate;
    t.epochs = cfg.train.epochs;
    t.lr_decay_factor = cfg.train.lr_decay_factor;
    t.lr_decay_interval = cfg.train.lr_decay_interval;
    t.seed = cfg.seed;
    t.mfg_T = cfg.mfg.t;
    t.n1 = cfg.mfg.n1;
    t.n2 = cfg.mfg.n2;
    t.use_mfg = cfg.mfg.enabled;
    return t;
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

RunConfig arm_config(RunConfig cfg, const std::string& arm) {
    auto& p = cfg.pipeline;
    p.fusion = p.pixel_weighting = p.image_selection = true;
    if (arm == "baseline") {
        p.fusion = p.pixel_weighting = p.image_selection = false;
    } else if (arm == "fusion") {
        p.pixel_weighting = p.image_selection = false;
    } else if (arm == "plw") {
        p.image_selection = false;
    } else if (arm == "ils" || arm == "full") {
        // all stages on
    } else if (arm == "wo_mfg") {
        cfg.mfg.enabled = false;
    } else if (arm.size() > 1 && arm[0] == 'k' &&
               arm.find_first_not_of("0123456789", 1) == std::string::npos) {
        p.k = std::stoi(arm.substr(1));
    } else {
        throw ContractViolation("ablate: unknown arm '" + arm + "'");
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text, const char* what) {
    std::ofstream f(path);
    f << text;
    if (!f) throw FormatError(std::string(what) + ": cannot write " + path.string());
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    check_keys(j, "", {"seed", "dataset", "pipeline", "mfg", "train", "eval", "ablation"});
    RunConfig cfg;
    read_field(j, "", "seed", cfg.seed);

    json d = section_or_empty(j, "dataset");
    check_keys(d, "dataset.",
               {"height", "width", "train_count", "test_count", "min_objects", "max_objects",
                "contrast", "annotation", "scribble_length"});
    read_field(d, "dataset.", "height", cfg.dataset.height);
    read_field(d, "dataset.", "width", cfg.dataset.width);
    read_field(d, "dataset.", "train_count", cfg.dataset.train_count);
    read_field(d, "dataset.", "test_count", cfg.dataset.test_count);
    read_field(d, "dataset.", "min_objects", cfg.dataset.min_objects);
    read_field(d, "dataset.", "max_objects", cfg.dataset.max_objects);
    read_field(d, "dataset.", "contrast", cfg.dataset.contrast);
    read_field(d, "dataset.", "annotation", cfg.dataset.annotation);
    read_field(d, "dataset.", "scribble_length", cfg.dataset.scribble_length);

    json p = section_or_empty(j, "pipeline");
    check_keys(p, "pipeline.",
               {"k", "tau_a", "tau_r", "theta_h", "fusion", "pixel_weighting", "image_selection",
                "provider", "mask_store", "boundary_jitter", "dropout_rate", "fp_rate"});
    read_field(p, "pipeline.", "k", cfg.pipeline.k);
    read_field(p, "pipeline.", "tau_a", cfg.pipeline.tau_a);
    read_field(p, "pipeline.", "tau_r", cfg.pipeline.tau_r);
    read_field(p, "pipeline.", "theta_h", cfg.pipeline.theta_h);
    read_field(p, "pipeline.", "fusion", cfg.pipeline.fusion);
    read_field(p, "pipeline.", "pixel_weighting", cfg.pipeline.pixel_weighting);
    read_field(p, "pipeline.", "image_selection", cfg.pipeline.image_selection);
    read_field(p, "pipeline.", "provider", cfg.pipeline.provider);
    read_field(p, "pipeline.", "mask_store", cfg.pipeline.mask_store);
    read_field(p, "pipeline.", "boundary_jitter", cfg.pipeline.boundary_jitter);
    read_field(p, "pipeline.", "dropout_rate", cfg.pipeline.dropout_rate);
    read_field(p, "pipeline.", "fp_rate", cfg.pipeline.fp_rate);

    json m = section_or_empty(j, "mfg");
    check_keys(m, "mfg.", {"enabled", "t", "n1", "n2"});
    read_field(m, "mfg.", "enabled", cfg.mfg.enabled);
    read_field(m, "mfg.", "t", cfg.mfg.t);
    read_field(m, "mfg.", "n1", cfg.mfg.n1);
    read_field(m, "mfg.", "n2", cfg.mfg.n2);

    json t = section_or_empty(j, "train");
    check_keys(t, "train.",
               {"batch_size", "learning_rate", "epochs", "lr_decay_factor", "lr_decay_interval",
                "repeat", "vary_points"});
    read_field(t, "train.", "batch_size", cfg.train.batch_size);
    read_field(t, "train.", "learning_rate", cfg.train.learning_rate);
    read_field(t, "train.", "epochs", cfg.train.epochs);
    read_field(t, "train.", "lr_decay_factor", cfg.train.lr_decay_factor);
    read_field(t, "train.", "lr_decay_interval", cfg.train.lr_decay_interval);
    read_field(t, "train.", "repeat", cfg.train.repeat);
    read_field(t, "train.", "vary_points", cfg.train.vary_points);

    json e = section_or_empty(j, "eval");
    check_keys(e, "eval.", {"split"});
    read_field(e, "eval.", "split", cfg.eval.split);

    json a = section_or_empty(j, "ablation");
    check_keys(a, "ablation.", {"arms", "seeds"});
    read_field(a, "ablation.", "arms", cfg.ablation.arms);
    read_field(a, "ablation.", "seeds", cfg.ablation.seeds);

    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw NotFoundError("config file not found: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError("config: invalid JSON in " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

json run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"height", cfg.dataset.height},
                    {"width", cfg.dataset.width},
                    {"train_count", cfg.dataset.train_count},
                    {"test_count", cfg.dataset.test_count},
                    {"min_objects", cfg.dataset.min_objects},
                    {"max_objects", cfg.dataset.max_objects},
                    {"contrast", cfg.dataset.contrast},
                    {"annotation", cfg.dataset.annotation},
                    {"scribble_length", cfg.dataset.scribble_length}};
    j["pipeline"] = {{"k", cfg.pipeline.k},
                     {"tau_a", cfg.pipeline.tau_a},
                     {"tau_r", cfg.pipeline.tau_r},
                     {"theta_h", cfg.pipeline.theta_h},
                     {"fusion", cfg.pipeline.fusion},
                     {"pixel_weighting", cfg.pipeline.pixel_weighting},
                     {"image_selection", cfg.pipeline.image_selection},
                     {"provider", cfg.pipeline.provider},
                     {"mask_store", cfg.pipeline.mask_store},
                     {"boundary_jitter", cfg.pipeline.boundary_jitter},
                     {"dropout_rate", cfg.pipeline.dropout_rate},
                     {"fp_rate", cfg.pipeline.fp_rate}};
    j["mfg"] = {{"enabled", cfg.mfg.enabled}, {"t", cfg.mfg.t}, {"n1", cfg.mfg.n1},
                {"n2", cfg.mfg.n2}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"epochs", cfg.train.epochs},
                  {"lr_decay_factor", cfg.train.lr_decay_factor},
                  {"lr_decay_interval", cfg.train.lr_decay_interval},
                  {"repeat", cfg.train.repeat},
                  {"vary_points", cfg.train.vary_points}};
    j["eval"] = {{"split", cfg.eval.split}};
    j["ablation"] = {{"arms", cfg.ablation.arms}, {"seeds", cfg.ablation.seeds}};
    return j;
}

json apply_override(const json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ContractViolation("--set expects key.path=value, got '" + assignment + "'");
    std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    std::replace(path.begin(), path.end(), '.', '/');

    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare words are strings
    }
    json patched = j;
    try {
        patched[json::json_pointer("/" + path)] = parsed;
    } catch (const json::exception& e) {
        throw ContractViolation("--set: bad key path '" + assignment + "': " + e.what());
    }
    return patched;
}

void ensure_out_dir(const fs::path& out, bool force) {
    if (fs::exists(out)) {
        if (!fs::is_directory(out))
            throw ContractViolation("output path exists and is not a directory: " + out.string());
        if (!fs::is_empty(out) && !force)
            throw ContractViolation("output directory is not empty (use --force): " +
                                    out.string());
    }
    fs::create_directories(out);
}

fs::path default_run_dir(const std::string& command) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const fs::path base = fs::path("runs") / (std::string(stamp) + "-" + command);
    fs::path candidate = base;
    for (int i = 1; fs::exists(candidate); ++i)
        candidate = base.string() + "-" + std::to_string(i);
    return candidate;
}

void write_run_preamble(const fs::path& out, const RunConfig& cfg) {
    write_text(out / "config.json", run_config_json(cfg).dump(2) + "\n", "run preamble");
    write_text(out / "version.txt", std::string("wscos ") + kVersion + "\n", "run preamble");
}

GenSummary cmd_gen(const RunConfig& cfg, const fs::path& out, bool force) {
    ensure_out_dir(out, force);
    write_run_preamble(out, cfg);
    write_dataset(out / "train",
                  generate_dataset(split_gen_config(cfg, "train", cfg.dataset.train_count)));
    write_dataset(out / "test",
                  generate_dataset(split_gen_config(cfg, "test", cfg.dataset.test_count)));
    return {cfg.dataset.train_count, cfg.dataset.test_count, cfg.dataset.height,
            cfg.dataset.width, cfg.seed};
}

RefineSummary cmd_refine(const RunConfig& cfg, const fs::path& data, const fs::path& out,
                         bool force, int jobs) {
    if (jobs < 1) throw ContractViolation("refine: jobs must be positive");
    const PipelineConfig pcfg = pipeline_config(cfg);
    validate_pipeline_config(pcfg);

    const std::vector<DatasetSample> samples = read_dataset(data / "train");
    std::unique_ptr<MaskProvider> provider = make_provider(cfg, samples);

    ensure_out_dir(out, force);
    write_run_preamble(out, cfg);

    std::vector<std::optional<PseudoLabel>> results(samples.size());
    std::vector<std::string> failures(samples.size());
    std::atomic<size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;

    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) {
            const DatasetSample& s = samples[i];
            try {
                results[i] = generate_pseudo_label(s.id, s.image, s.ann, *provider, pcfg);
            } catch (const PipelineError& e) {
                failures[i] = e.what();
            } catch (const ProviderError& e) {
                failures[i] = e.what();
            } catch (...) {
                std::lock_guard<std::mutex> lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                return;
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    RefineSummary sum;
    sum.total = static_cast<int>(samples.size());
    double ua = 0.0, ur = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (!results[i]) {
            ++sum.skipped;
            sum.skipped_ids.emplace_back(samples[i].id, failures[i]);
            continue;
        }
        const PseudoLabel& label = *results[i];
        write_pseudo_label(out, samples[i].id, label);
        label.kept ? ++sum.kept : ++sum.rejected;
        ua += label.stats.U_a;
        ur += label.stats.U_r;
    }
    const int processed = sum.kept + sum.rejected;
    if (processed > 0) {
        sum.mean_u_a = ua / processed;
        sum.mean_u_r = ur / processed;
    }

    json report;
    report["total"] = sum.total;
    report["kept"] = sum.kept;
    report["rejected"] = sum.rejected;
    report["skipped"] = sum.skipped;
    report["mean_u_a"] = sum.mean_u_a;
    report["mean_u_r"] = sum.mean_u_r;
    report["skipped_ids"] = json::array();
    for (const auto& [id, reason] : sum.skipped_ids)
        report["skipped_ids"].push_back({{"id", id}, {"reason", reason}});
    write_text(out / "refine_summary.json", report.dump(2) + "\n", "refine");
    return sum;
}

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& labels,
                       const fs::path& out, bool force) {
    if (cfg.train.repeat < 1) throw ContractViolation("train: repeat must be positive");
    const std::vector<DatasetSample> samples = read_dataset(data / "train");

    TrainSummary sum;
    std::vector<DatasetSample> used;
    std::vector<PseudoLabel> used_labels;
    for (const auto& s : samples) {
        try {
            used_labels.push_back(read_pseudo_label(labels, s.id));
        } catch (const NotFoundError&) {
            ++sum.missing;  // refinement skipped this image; train without it
            continue;
        }
        used.push_back(s);
    }
    if (used.empty()) throw ContractViolation("train: no usable labeled samples under " +
                                              labels.string());
    sum.used = static_cast<int>(used.size());
    for (const auto& l : used_labels) sum.rejected += l.kept ? 0 : 1;

    ensure_out_dir(out, force);
    write_run_preamble(out, cfg);

    TrainConfig tc = train_config(cfg);
    const Rng point_base(Rng::mix(cfg.seed, Rng::hash_string("vary-points")));
    json history;
    history["used"] = sum.used;
    history["rejected"] = sum.rejected;
    history["missing"] = sum.missing;
    history["repeats"] = json::array();

    for (int r = 0; r < cfg.train.repeat; ++r) {
        std::vector<TrainSample> batch;
        Rng point_rng = point_base.split(static_cast<std::uint64_t>(r));
        for (size_t i = 0; i < used.size(); ++i) {
            TrainSample ts;
            ts.id = used[i].id;
            ts.image = used[i].image;
            ts.ann = cfg.train.vary_points ? sample_point_annotation(used[i].gt, point_rng)
                                           : used[i].ann;
            ts.label = used_labels[i];
            batch.push_back(std::move(ts));
        }
        tc.seed = r == 0 ? cfg.seed : Rng::mix(cfg.seed, static_cast<std::uint64_t>(r));
        TrainResult res = train(batch, tc);

        const fs::path ckpt =
            out / (r == 0 ? std::string("checkpoint.bin") : "checkpoint_" + std::to_string(r) +
                                                                ".bin");
        save_checkpoint(ckpt, res.params);
        sum.checkpoints.push_back(ckpt);
        sum.losses.push_back(res.epoch_loss);
        history["repeats"].push_back(
            {{"checkpoint", ckpt.filename().string()}, {"loss", res.epoch_loss}});
    }
    write_text(out / "history.json", history.dump(2) + "\n", "train");
    return sum;
}

EvalSummary cmd_eval(const RunConfig& cfg, const fs::path& data,
                     const std::vector<fs::path>& checkpoints, const fs::path& out, bool force) {
    if (checkpoints.empty()) throw ContractViolation("eval: at least one checkpoint required");
    if (cfg.eval.split != "train" && cfg.eval.split != "test")
        throw ContractViolation("eval: split must be 'train' or 'test'");
    const std::vector<DatasetSample> samples = read_dataset(data / cfg.eval.split);

    ensure_out_dir(out, force);
    write_run_preamble(out, cfg);

    EvalSummary sum;
    std::vector<MetricReport> reports;
    for (const fs::path& ckpt : checkpoints) {
        const SegmenterParams params = load_checkpoint(ckpt);
        if (params.H != samples[0].image.rows || params.W != samples[0].image.cols)
            throw ContractViolation("eval: checkpoint dims do not match the dataset");
        std::vector<EvalCase> cases;
        for (const auto& s : samples) cases.push_back({s.id, predict(params, s.image), s.gt});
        reports.push_back(evaluate(cases));
        sum.run_aggregates.push_back(reports.back().aggregate);
    }
    sum.report = reports[0];

    if (reports.size() == 1) {
        write_metrics_json(out / "metrics.json", sum.report);
        write_text(out / "metrics.txt", metrics_table(sum.report), "eval");
        return sum;
    }

    const size_t n = reports.size();
    MetricTriple mean;
    for (const auto& a : sum.run_aggregates) {
        mean.mae += a.mae / n;
        mean.f_beta += a.f_beta / n;
        mean.iou += a.iou / n;
    }
    for (const auto& a : sum.run_aggregates) {
        sum.spread.mae += (a.mae - mean.mae) * (a.mae - mean.mae) / n;
        sum.spread.f_beta += (a.f_beta - mean.f_beta) * (a.f_beta - mean.f_beta) / n;
        sum.spread.iou += (a.iou - mean.iou) * (a.iou - mean.iou) / n;
    }
    sum.spread = {std::sqrt(sum.spread.mae), std::sqrt(sum.spread.f_beta),
                  std::sqrt(sum.spread.iou)};

    json combined;
    combined["aggregate"] = {{"mae", mean.mae}, {"f_beta", mean.f_beta}, {"iou", mean.iou}};
    combined["spread"] = {{"mae", sum.spread.mae},
                          {"f_beta", sum.spread.f_beta},
                          {"iou", sum.spread.iou}};
    combined["runs"] = json::array();
    for (size_t r = 0; r < n; ++r) {
        const MetricTriple& a = sum.run_aggregates[r];
        combined["runs"].push_back({{"checkpoint", checkpoints[r].filename().string()},
                                    {"mae", a.mae},
                                    {"f_beta", a.f_beta},
                                    {"iou", a.iou}});
        write_metrics_json(out / ("metrics_run" + std::to_string(r) + ".json"), reports[r]);
    }
    write_text(out / "metrics.json", combined.dump(2) + "\n", "eval");

    char line[128];
    std::string table = metrics_table(sum.report);
    std::snprintf(line, sizeof line, "spread over %zu runs: mae %.4f  f_beta %.4f  iou %.4f\n",
                  n, sum.spread.mae, sum.spread.f_beta, sum.spread.iou);
    write_text(out / "metrics.txt", table + line, "eval");
    return sum;
}

std::vector<AblationArm> cmd_ablate(const RunConfig& cfg, const fs::path& out, bool force,
                                    int jobs) {
    if (cfg.ablation.arms.empty() || cfg.ablation.seeds.empty())
        throw ContractViolation("ablate: arms and seeds must be non-empty");
    for (const auto& arm : cfg.ablation.arms) arm_config(cfg, arm);  // validate names up front

    ensure_out_dir(out, force);
    write_run_preamble(out, cfg);

    std::vector<AblationArm> arms;
    for (const auto& name : cfg.ablation.arms) arms.push_back({name, {}, {}});

    for (std::uint64_t seed : cfg.ablation.seeds) {
        RunConfig seeded = cfg;
        seeded.seed = seed;
        const fs::path seed_dir = out / ("seed" + std::to_string(seed));
        const fs::path data_dir = seed_dir / "data";
        cmd_gen(seeded, data_dir, force);
        for (size_t a = 0; a < arms.size(); ++a) {
            const RunConfig armed = arm_config(seeded, arms[a].name);
            const fs::path arm_dir = seed_dir / arms[a].name;
            cmd_refine(armed, data_dir, arm_dir / "labels", force, jobs);
            cmd_train(armed, data_dir, arm_dir / "labels", arm_dir / "model", force);
            const EvalSummary ev = cmd_eval(armed, data_dir,
                                            {arm_dir / "model" / "checkpoint.bin"},
                                            arm_dir / "eval", force);
            arms[a].per_seed.emplace_back(seed, ev.report.aggregate);
            std::cout << "ablate: seed " << seed << " arm " << arms[a].name << " done (mae "
                      << ev.report.aggregate.mae << ", iou " << ev.report.aggregate.iou << ")\n";
        }
    }

    json doc = json::array();
    for (auto& arm : arms) {
        std::vector<double> maes, fbs, ious;
        json per_seed = json::array();
        for (const auto& [seed, t] : arm.per_seed) {
            maes.push_back(t.mae);
            fbs.push_back(t.f_beta);
            ious.push_back(t.iou);
            per_seed.push_back(
                {{"seed", seed}, {"mae", t.mae}, {"f_beta", t.f_beta}, {"iou", t.iou}});
        }
        arm.median = {median_of(maes), median_of(fbs), median_of(ious)};
        doc.push_back({{"name", arm.name},
                       {"median",
                        {{"mae", arm.median.mae},
                         {"f_beta", arm.median.f_beta},
                         {"iou", arm.median.iou}}},
                       {"per_seed", per_seed}});
    }
    write_text(out / "ablation.json", doc.dump(2) + "\n", "ablate");
    write_text(out / "ablation.txt", ablation_table(arms), "ablate");
    return arms;
}

std::string ablation_table(const std::vector<AblationArm>& arms) {
    std::string out = "arm           mae     f_beta  iou     (median)\n";
    char line[128];
    for (const auto& arm : arms) {
        std::snprintf(line, sizeof line, "%-12s  %.4f  %.4f  %.4f\n", arm.name.c_str(),
                      arm.median.mae, arm.median.f_beta, arm.median.iou);
        out += line;
    }
    return out;
}

const char* error_category(const std::exception& e) {
    if (dynamic_cast<const ContractViolation*>(&e)) return "contract";
    if (dynamic_cast<const NotFoundError*>(&e)) return "not-found";
    if (dynamic_cast<const ProviderError*>(&e)) return "provider";
    if (dynamic_cast<const FormatError*>(&e)) return "format";
    if (dynamic_cast<const PipelineError*>(&e)) return "pipeline";
    if (dynamic_cast<const TrainingError*>(&e)) return "training";
    if (dynamic_cast<const GenerationError*>(&e)) return "generation";
    return "error";
}

int error_exit_code(const std::exception& e) {
    const std::string cat = error_category(e);
    if (cat == "contract") return 2;
    if (cat == "not-found") return 3;
    if (cat == "format") return 4;
    if (cat == "provider") return 5;
    if (cat == "pipeline") return 6;
    if (cat == "training") return 7;
    if (cat == "generation") return 8;
    return 1;
}

}  // namespace wscos
