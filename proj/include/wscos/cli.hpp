#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wscos/evalkit.hpp"

namespace wscos {

inline constexpr const char* kVersion = "0.1.0";

// One section per pipeline stage; every field maps to exactly one knob of the
// underlying module, and the whole struct round-trips through JSON.
struct DatasetSection {
    int height = 64, width = 64;
    int train_count = 200, test_count = 50;
    int min_objects = 1, max_objects = 3;
    double contrast = 0.4;
    std::string annotation = "points";  // or "scribble"
    int scribble_length = 16;
};

struct PipelineSection {
    int k = 12;
    double tau_a = 0.1, tau_r = 0.5, theta_h = 0.9;
    bool fusion = true, pixel_weighting = true, image_selection = true;
    std::string provider = "oracle";  // or "store"
    std::string mask_store;           // store provider: directory of aug_<k>.pgm files
    int boundary_jitter = 0;          // oracle noise knobs
    double dropout_rate = 0.0, fp_rate = 0.0;
};

struct MFGSection {
    bool enabled = true;
    int t = 3;
    int n1 = 2, n2 = 4;
};

struct TrainSection {
    int batch_size = 8;
    double learning_rate = 1e-3;
    int epochs = 50;
    double lr_decay_factor = 0.1;
    int lr_decay_interval = 80;
    int repeat = 1;            // independent training runs in one invocation
    bool vary_points = false;  // resample point annotations per repeat
};

struct EvalSection {
    std::string split = "test";  // or "train"
};

struct AblationSection {
    std::vector<std::string> arms = {"baseline", "fusion", "plw", "ils"};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
};

struct RunConfig {
    std::uint64_t seed = 0;  // master seed; stages derive their streams from it
    DatasetSection dataset;
    PipelineSection pipeline;
    MFGSection mfg;
    TrainSection train;
    EvalSection eval;
    AblationSection ablation;
};

// Strict parse: unknown keys anywhere and type mismatches -> ContractViolation
// naming the offending key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& cfg);

// "train.epochs=20" -> patch the config JSON at that key path. The value is
// parsed as a JSON literal when possible, else taken as a string; the patched
// document goes back through the strict parser, so typo'd paths are rejected.
nlohmann::json apply_override(const nlohmann::json& j, const std::string& assignment);

// Creates `out` (parents included). An existing non-empty directory is
// refused unless force is set.
void ensure_out_dir(const std::filesystem::path& out, bool force);

// runs/<UTC timestamp>-<command>, suffixed -1, -2, ... on collision.
std::filesystem::path default_run_dir(const std::string& command);

// config.json (the effective config, so a rerun from it is bit-identical)
// plus version.txt.
void write_run_preamble(const std::filesystem::path& out, const RunConfig& cfg);

struct GenSummary {
    int train_count = 0, test_count = 0;
    int height = 0, width = 0;
    std::uint64_t seed = 0;
};

// <out>/train and <out>/test per the dataset-store layout.
GenSummary cmd_gen(const RunConfig& cfg, const std::filesystem::path& out, bool force);

struct RefineSummary {
    int total = 0, kept = 0, rejected = 0, skipped = 0;
    double mean_u_a = 0.0, mean_u_r = 0.0;  // over processed (non-skipped) images
    std::vector<std::pair<std::string, std::string>> skipped_ids;  // id -> reason
};

// Pseudo-labels for the train split into <out>; images whose provider fails
// outright are skipped and reported, not fatal. jobs > 1 refines images in
// parallel with deterministic outputs.
RefineSummary cmd_refine(const RunConfig& cfg, const std::filesystem::path& data,
                         const std::filesystem::path& out, bool force, int jobs = 1);

struct TrainSummary {
    int used = 0, rejected = 0, missing = 0;  // missing: no label artifact -> dropped
    std::vector<std::vector<double>> losses;  // one loss history per repeat
    std::vector<std::filesystem::path> checkpoints;
};

TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& data,
                       const std::filesystem::path& labels, const std::filesystem::path& out,
                       bool force);

struct EvalSummary {
    MetricReport report;  // first checkpoint's full report
    std::vector<MetricTriple> run_aggregates;
    MetricTriple spread;  // per-metric std over runs (zero for a single run)
};

// Single checkpoint: metrics.json is the plain MetricReport serialization.
// Several checkpoints (--repeat trainings): per-run files plus a combined
// metrics.json with mean and spread.
EvalSummary cmd_eval(const RunConfig& cfg, const std::filesystem::path& data,
                     const std::vector<std::filesystem::path>& checkpoints,
                     const std::filesystem::path& out, bool force);

struct AblationArm {
    std::string name;
    std::vector<std::pair<std::uint64_t, MetricTriple>> per_seed;
    MetricTriple median;
};

// Arms: baseline (no fusion/plw/ils), fusion, plw, ils (cumulative stages),
// full (= ils), wo_mfg (full labels, model without grouping), k<N> (full at
// ensemble size N). Each seed generates one dataset shared by every arm.
std::vector<AblationArm> cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out,
                                    bool force, int jobs = 1);

std::string ablation_table(const std::vector<AblationArm>& arms);

// Category tag and process exit code for a pipeline exception.
const char* error_category(const std::exception& e);
int error_exit_code(const std::exception& e);

}  // namespace wscos
