#include "wscos/provider.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wscos/blob.hpp"
#include "wscos/errors.hpp"
#include "wscos/pgm.hpp"

namespace wscos {

namespace {

namespace fs = std::filesystem;

fs::path mask_path(const fs::path& store_dir, const std::string& image_id, int aug_index) {
    return store_dir / image_id / ("aug_" + std::to_string(aug_index) + ".pgm");
}

// Draws a disk of the given radius onto `site`, centered at least `margin`
// pixels (Chebyshev) clear of anything in `occupied`. Returns false when no
// clear spot turns up, leaving `site` untouched.
bool place_disk(Rng& rng, const Grid& occupied, int rad, int margin, Grid& site) {
    const int rows = occupied.rows;
    const int cols = occupied.cols;
    if (rows < 2 * rad + 3 || cols < 2 * rad + 3) return false;
    for (int attempt = 0; attempt < 50; ++attempt) {
        const int r0 = rng.uniform_int(rad + 1, rows - 2 - rad);
        const int c0 = rng.uniform_int(rad + 1, cols - 2 - rad);
        bool clear = true;
        for (int r = std::max(0, r0 - rad - margin); clear && r <= std::min(rows - 1, r0 + rad + margin); ++r)
            for (int c = std::max(0, c0 - rad - margin); clear && c <= std::min(cols - 1, c0 + rad + margin); ++c)
                if (occupied.at(r, c) != 0.0) clear = false;
        if (!clear) continue;
        for (int r = r0 - rad; r <= r0 + rad; ++r)
            for (int c = c0 - rad; c <= c0 + rad; ++c)
                if ((r - r0) * (r - r0) + (c - c0) * (c - c0) <= rad * rad) site.at(r, c) = 1.0;
        return true;
    }
    return false;
}

void merge_into(Grid& dst, const Grid& src) {
    for (size_t i = 0; i < dst.size(); ++i)
        if (src.v[i] != 0.0) dst.v[i] = 1.0;
}

}  // namespace

ProbMask MaskProvider::segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                               const ViewContext& ctx) {
    if (prompts.empty()) throw ContractViolation("segment: empty prompt list");
    bool any_fg = false;
    for (const auto& p : prompts) {
        if (p.row < 0 || p.row >= image.rows || p.col < 0 || p.col >= image.cols)
            throw ContractViolation("segment: prompt out of bounds");
        any_fg = any_fg || p.foreground;
    }
    if (!any_fg) throw ContractViolation("segment: no foreground prompt");

    ProbMask mask = do_segment(image, prompts, ctx);
    if (!mask.same_dims(image))
        throw ProviderError("segment: provider returned wrong dims for " + ctx.image_id);
    if (!in_unit_range(mask))
        throw ProviderError("segment: provider returned values outside [0,1] for " + ctx.image_id);
    return mask;
}

void validate_oracle_config(const OracleConfig& cfg) {
    if (cfg.boundary_jitter < 0) throw ContractViolation("OracleConfig: negative jitter");
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate > 1.0)
        throw ContractViolation("OracleConfig: dropout_rate outside [0,1]");
    if (cfg.fp_rate < 0.0 || cfg.fp_rate > 1.0)
        throw ContractViolation("OracleConfig: fp_rate outside [0,1]");
}

ProbMask oracle_segment(const ProbMask& gt, const std::vector<LabeledPoint>& prompts,
                        const OracleConfig& cfg) {
    validate_oracle_config(cfg);
    if (!is_binary(gt)) throw ContractViolation("oracle_segment: gt must be binary");

    std::vector<int> labels;
    const int n_blobs = label_components(gt, labels);
    Rng rng(cfg.seed);
    Grid out(gt.rows, gt.cols);

    for (int b = 1; b <= n_blobs; ++b) {
        Rng brng = rng.split(static_cast<std::uint64_t>(b));
        bool prompted = false;
        for (const auto& p : prompts)
            if (p.foreground && labels[static_cast<size_t>(p.row) * gt.cols + p.col] == b)
                prompted = true;
        if (!prompted && brng.uniform() < cfg.dropout_rate) continue;

        Grid blob(gt.rows, gt.cols);
        for (size_t i = 0; i < gt.size(); ++i) blob.v[i] = labels[i] == b ? 1.0 : 0.0;
        if (cfg.boundary_jitter > 0) {
            // Over-segmentation bias: a promptable segmenter on low-contrast
            // scenes bleeds into surrounding texture rather than carving into
            // the object, so jitter only ever dilates; the boundary is exact a
            // quarter of the time, else the radius is uniform over 1..jitter.
            const int radius =
                brng.uniform() < 0.25 ? 0 : brng.uniform_int(1, cfg.boundary_jitter);
            if (radius > 0) blob = dilate(blob, radius);
        }
        for (size_t i = 0; i < out.size(); ++i)
            if (blob.v[i] != 0.0) out.v[i] = 1.0;
    }

    Rng fprng = rng.split(0);
    if (fprng.uniform() < cfg.fp_rate) {
        // A small square placed clear of gt and current output (1 px margin so
        // it stays its own 8-connected blob). Skipped if no spot is found.
        for (int attempt = 0; attempt < 50; ++attempt) {
            const int rad = static_cast<int>(fprng.uniform_index(2)) + 1;
            if (gt.rows <= 2 * rad || gt.cols <= 2 * rad) continue;
            const int r0 = fprng.uniform_int(rad, gt.rows - 1 - rad);
            const int c0 = fprng.uniform_int(rad, gt.cols - 1 - rad);
            bool clear = true;
            for (int r = std::max(0, r0 - rad - 1); clear && r <= std::min(gt.rows - 1, r0 + rad + 1); ++r)
                for (int c = std::max(0, c0 - rad - 1); clear && c <= std::min(gt.cols - 1, c0 + rad + 1); ++c)
                    if (gt.at(r, c) != 0.0 || out.at(r, c) != 0.0) clear = false;
            if (!clear) continue;
            for (int r = r0 - rad; r <= r0 + rad; ++r)
                for (int c = c0 - rad; c <= c0 + rad; ++c) out.at(r, c) = 1.0;
            break;
        }
    }
    return out;
}

OracleProvider::OracleProvider(std::unordered_map<std::string, Grid> gts, OracleConfig cfg)
    : gts_(std::move(gts)), cfg_(cfg) {
    validate_oracle_config(cfg_);
}

ProbMask OracleProvider::do_segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                                    const ViewContext& ctx) {
    auto it = gts_.find(ctx.image_id);
    if (it == gts_.end()) throw ProviderError("oracle: unknown image id " + ctx.image_id);
    const Grid& gt = it->second;

    std::vector<int> labels;
    const int n_blobs = label_components(gt, labels);

    // Blob ids ride through the view transform so the per-image draws below
    // key on the same blob under every augmentation.
    Grid id_grid(gt.rows, gt.cols);
    for (size_t i = 0; i < id_grid.size(); ++i) id_grid.v[i] = labels[i];
    const Grid id_view = apply_grid(id_grid, ctx.spec, Interp::nearest);
    if (!id_view.same_dims(image))
        throw ProviderError("oracle: view dims mismatch for " + ctx.image_id);

    std::vector<bool> prompted(static_cast<size_t>(n_blobs) + 1, false);
    for (const auto& p : prompts)
        if (p.foreground) {
            const int b = static_cast<int>(id_view.at(p.row, p.col));
            if (b > 0) prompted[static_cast<size_t>(b)] = true;
        }

    // The provider realizes dropout_rate with size-dependent structure, the
    // way a real promptable segmenter fails. Objects are classed by area in
    // the original frame: tiny (<= 48 px), small (<= 110 px), large. Per
    // unprompted call the miss rates are m1 = min(1, 1.9d) for tiny, m2
    // (events plus overflow once the budget saturates) for small, and the
    // residual m3 for large, so a balanced tiny/small/large mix misses at
    // dropout_rate overall and dropout_rate=1 removes every unprompted blob.
    //
    // How a miss shows up also depends on class. Tiny objects split between
    // invisible (missed in every view) and flicker (an independent miss per
    // view at rate 0.3, so multi-view fusion can recover them). Small objects
    // rarely vanish outside events; instead every view asserts them at the
    // degraded confidence 1 - 0.32d — visible, but too uncertain to survive
    // entropy weighting. Large objects either show or vanish wholesale.
    //
    // A hallucination event (prob fp_rate per image) is a scene the segmenter
    // catastrophically misreads: tiny and small objects vanish, each large
    // object vanishes with prob 0.7, and spurious sites appear (below).
    const double d = cfg_.dropout_rate;
    const double fp = cfg_.fp_rate;
    const double m1 = std::min(1.0, 1.9 * d);
    const double rem = 3.0 * d - m1;
    const double m2 = std::clamp(rem - 1.0, fp, 1.0);
    const double m3 = std::clamp(rem - m2, 0.0, 1.0);
    const double p_ev1 = fp > 0.0 ? std::min(1.0, m1 / fp) : 0.0;
    const double p_ev3 = fp > 0.0 ? std::min(0.7, m3 / fp) : 0.0;
    const double ord1 = fp < 1.0 ? (m1 - fp * p_ev1) / (1.0 - fp) : 0.0;
    const double ord2 = fp < 1.0 ? (m2 - fp) / (1.0 - fp) : 0.0;
    const double ord3 = fp < 1.0 ? (m3 - fp * p_ev3) / (1.0 - fp) : 0.0;
    const double flicker1 = std::min(0.3, ord1);
    const double invis1 = (ord1 - flicker1) / (1.0 - flicker1);
    const double small_conf = 1.0 - 0.32 * d;

    std::vector<int> blob_area(static_cast<size_t>(n_blobs) + 1, 0);
    for (int l : labels) ++blob_area[static_cast<size_t>(l)];
    auto size_class = [&](int b) {  // 1 tiny, 2 small, 3 large
        const int area = blob_area[static_cast<size_t>(b)];
        return area <= 48 ? 1 : area <= 110 ? 2 : 3;
    };

    const std::uint64_t img_word = Rng::mix(cfg_.seed, Rng::hash_string(ctx.image_id));
    const std::uint64_t view_word = Rng::mix(img_word, static_cast<std::uint64_t>(ctx.view_index));
    Rng event_rng(Rng::mix(img_word, Rng::hash_string("hallucination")));
    const bool event = fp > 0.0 && event_rng.uniform() < fp;
    Rng class_rng(Rng::mix(img_word, Rng::hash_string("class")));
    Rng flaky_rng(Rng::mix(view_word, Rng::hash_string("flaky")));

    Grid kept = gt;
    std::vector<int> soft_small;  // unprompted smalls, painted at small_conf below
    for (int b = 1; b <= n_blobs; ++b) {
        if (prompted[static_cast<size_t>(b)]) continue;
        const int cls = size_class(b);
        bool miss;
        bool soft = false;
        if (event) {
            const double p_ev = cls == 1 ? p_ev1 : cls == 2 ? 1.0 : p_ev3;
            miss = class_rng.split(b).uniform() < p_ev;
        } else if (cls == 1) {
            miss = class_rng.split(b).uniform() < invis1 ||
                   flaky_rng.split(b).uniform() < flicker1;
        } else if (cls == 2) {
            miss = class_rng.split(b).uniform() < ord2;
            soft = !miss;
        } else {
            miss = class_rng.split(b).uniform() < ord3;
        }
        if (miss || soft)
            for (size_t i = 0; i < kept.size(); ++i)
                if (labels[i] == b) kept.v[i] = 0.0;
        if (soft) soft_small.push_back(b);
    }

    // The oracle's boundary error is a property of the scene, not of the view
    // resolution, so the jitter radius scales with the view.
    OracleConfig view_cfg = cfg_;
    view_cfg.dropout_rate = 0.0;  // applied above, at view-stable blob identity
    view_cfg.fp_rate = 0.0;       // applied below, at view-stable geometry
    view_cfg.seed = view_word;
    view_cfg.boundary_jitter =
        static_cast<int>(std::llround(cfg_.boundary_jitter * ctx.spec.scale));
    Grid out = oracle_segment(apply_grid(kept, ctx.spec, Interp::nearest), prompts, view_cfg);

    // Low-confidence smalls get a tight soft mask: every view asserts the
    // exact object support at small_conf, with no boundary jitter.
    for (int b : soft_small)
        for (size_t i = 0; i < out.size(); ++i)
            if (static_cast<int>(id_view.v[i]) == b) out.v[i] = std::max(out.v[i], small_conf);

    // An event also hallucinates spurious sites: one mid-size disk the oracle
    // asserts in every view, plus four larger disks it wavers on (coin flip
    // per view per disk, fusing near 0.5). Geometry is drawn once per image so
    // every view sees the same sites.
    if (event) {
        Grid occupied = gt;
        Grid sure(gt.rows, gt.cols);
        const int rad_sure = 5 + static_cast<int>(event_rng.uniform_index(3));
        if (place_disk(event_rng, occupied, rad_sure, 2, sure)) merge_into(occupied, sure);
        Rng waver_rng(Rng::mix(view_word, Rng::hash_string("waver")));
        for (int i = 0; i < 4; ++i) {
            Grid wavering(gt.rows, gt.cols);
            const int rad = 7 + static_cast<int>(event_rng.uniform_index(3));
            if (!place_disk(event_rng, occupied, rad, 2, wavering)) continue;
            merge_into(occupied, wavering);
            if (waver_rng.split(i).uniform() < 0.5)
                merge_into(out, apply_grid(wavering, ctx.spec, Interp::nearest));
        }
        merge_into(out, apply_grid(sure, ctx.spec, Interp::nearest));
    }
    return out;
}

ProbMask file_lookup(const std::string& image_id, int aug_index,
                     const std::filesystem::path& store_dir) {
    return read_pgm(mask_path(store_dir, image_id, aug_index));
}

FileStoreProvider::FileStoreProvider(std::filesystem::path store_dir)
    : store_dir_(std::move(store_dir)) {}

ProbMask FileStoreProvider::do_segment(const Grid& image,
                                       const std::vector<LabeledPoint>& prompts,
                                       const ViewContext& ctx) {
    (void)prompts;  // the mask was produced offline; prompts are already baked in
    ProbMask mask = file_lookup(ctx.image_id, ctx.view_index, store_dir_);
    if (!mask.same_dims(image))
        throw FormatError("mask store: " + ctx.image_id + "/aug_" +
                          std::to_string(ctx.view_index) + " dims do not match the view");
    return mask;
}

void write_mask_store(const std::filesystem::path& store_dir,
                      const std::map<std::string, std::vector<ProbMask>>& masks) {
    nlohmann::json manifest;
    manifest["images"] = nlohmann::json::array();
    for (const auto& [id, views] : masks) {
        if (views.empty()) continue;
        std::filesystem::create_directories(store_dir / id);
        nlohmann::json entry;
        entry["id"] = id;
        entry["rows"] = views[0].rows;
        entry["cols"] = views[0].cols;
        auto augs = nlohmann::json::array();
        for (size_t k = 0; k < views.size(); ++k) {
            write_pgm(mask_path(store_dir, id, static_cast<int>(k)), views[k]);
            augs.push_back(k);
        }
        entry["augs"] = augs;
        manifest["images"].push_back(entry);
    }
    std::ofstream out(store_dir / "manifest.json");
    if (!out) throw FormatError("cannot write manifest in " + store_dir.string());
    out << manifest.dump(2) << "\n";
}

}  // namespace wscos
