#include "wscos/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wscos/errors.hpp"
#include "wscos/pgm.hpp"

namespace wscos {

namespace {

using nlohmann::json;

json augspec_to_json(const AugSpec& s) {
    return {{"flip", s.flip == Flip::horizontal ? "horizontal" : "none"},
            {"rotation", s.rotation},
            {"scale", s.scale}};
}

AugSpec augspec_from_json(const json& j) {
    AugSpec s;
    s.flip = j.at("flip").get<std::string>() == "horizontal" ? Flip::horizontal : Flip::none;
    s.rotation = j.at("rotation").get<int>();
    s.scale = j.at("scale").get<double>();
    validate_augspec(s);
    return s;
}

}  // namespace

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.K < 1) throw ContractViolation("PipelineConfig: K must be >= 1");
    for (double t : {cfg.tau_a, cfg.tau_r, cfg.theta_h})
        if (!(t > 0.0 && t <= 1.0))
            throw ContractViolation("PipelineConfig: thresholds must be in (0,1]");
}

ProbMask fuse(const std::vector<ProbMask>& masks) {
    if (masks.empty()) throw ContractViolation("fuse: empty mask list");
    for (const auto& m : masks) require_dims_match(masks[0], m, "fuse");
    ProbMask out(masks[0].rows, masks[0].cols);
    for (const auto& m : masks)
        for (size_t i = 0; i < out.size(); ++i) out.v[i] += m.v[i];
    const double inv = 1.0 / static_cast<double>(masks.size());
    for (double& v : out.v) v *= inv;
    return out;
}

Grid entropy_map(const ProbMask& fused) {
    Grid out(fused.rows, fused.cols);
    for (size_t i = 0; i < fused.size(); ++i) {
        const double p = fused.v[i];
        if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("entropy_map: value outside [0,1]");
        double h = 0.0;
        if (p > 0.0) h -= p * std::log2(p);
        if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
        out.v[i] = h;
    }
    return out;
}

UncertaintyStats uncertainty_stats(const Grid& entropy, const ProbMask& fused, double theta_h) {
    require_dims_match(entropy, fused, "uncertainty_stats");
    UncertaintyStats s;
    for (size_t i = 0; i < entropy.size(); ++i) {
        if (entropy.v[i] > theta_h)
            ++s.high_count;
        else if (fused.v[i] > 0.5)
            ++s.conf_fg_count;
    }
    s.U_a = static_cast<double>(s.high_count) / static_cast<double>(entropy.size());
    s.U_r = static_cast<double>(s.high_count) /
            std::max(1, s.high_count + s.conf_fg_count);
    return s;
}

bool select_image(const UncertaintyStats& stats, const PipelineConfig& cfg) {
    return stats.U_a < cfg.tau_a && stats.U_r < cfg.tau_r;
}

PseudoLabel refine(const ProbMask& fused, const Grid& entropy, bool kept, bool pixel_weighting) {
    require_dims_match(fused, entropy, "refine");
    PseudoLabel label;
    label.fused = fused;
    label.entropy = entropy;
    label.kept = kept;
    label.weighted_mask = fused;
    if (pixel_weighting)
        for (size_t i = 0; i < fused.size(); ++i)
            label.weighted_mask.v[i] = (1.0 - entropy.v[i]) * fused.v[i];
    else
        for (double& v : label.weighted_mask.v) v = v > 0.5 ? 1.0 : 0.0;
    return label;
}

std::vector<LabeledPoint> nine_box_points(const ScribbleGrid& scribble, bool foreground,
                                          Rng& rng) {
    const ScribbleLabel want = foreground ? ScribbleLabel::foreground : ScribbleLabel::background;
    int rmin = scribble.rows, rmax = -1, cmin = scribble.cols, cmax = -1;
    for (int r = 0; r < scribble.rows; ++r)
        for (int c = 0; c < scribble.cols; ++c)
            if (scribble.at(r, c) == want) {
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
    if (rmax < 0) throw ContractViolation("nine_box_points: scribble has no pixel of that label");

    const int bh = rmax - rmin + 1, bw = cmax - cmin + 1;
    std::vector<std::vector<LabeledPoint>> cells(9);
    for (int r = rmin; r <= rmax; ++r)
        for (int c = cmin; c <= cmax; ++c)
            if (scribble.at(r, c) == want) {
                const int ci = std::min(2, (r - rmin) * 3 / bh);
                const int cj = std::min(2, (c - cmin) * 3 / bw);
                cells[ci * 3 + cj].push_back({r, c, foreground});
            }
    std::vector<LabeledPoint> out;
    for (const auto& cell : cells)
        if (!cell.empty()) out.push_back(cell[rng.uniform_index(cell.size())]);
    return out;
}

PseudoLabel generate_pseudo_label(const std::string& image_id, const Grid& image,
                                  const SparseAnnotation& ann, MaskProvider& provider,
                                  const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);

    Rng base(Rng::mix(cfg.seed, Rng::hash_string(image_id)));
    Rng aug_rng = base.split(1);
    Rng prompt_rng = base.split(2);

    std::vector<LabeledPoint> prompts = ann.points;
    if (ann.has_scribble()) {
        auto fg = nine_box_points(ann.scribble, true, prompt_rng);
        prompts.insert(prompts.end(), fg.begin(), fg.end());
        bool has_bg = false;
        for (const auto& cell : ann.scribble.v)
            if (cell == ScribbleLabel::background) has_bg = true;
        if (has_bg) {
            auto bg = nine_box_points(ann.scribble, false, prompt_rng);
            prompts.insert(prompts.end(), bg.begin(), bg.end());
        }
    }
    bool any_fg = false;
    for (const auto& p : prompts) any_fg = any_fg || p.foreground;
    if (!any_fg) throw ContractViolation("generate_pseudo_label: no foreground cue");

    std::vector<AugSpec> specs;
    if (cfg.fusion)
        for (int k = 0; k < cfg.K; ++k) specs.push_back(sample_augspec(aug_rng));
    else
        specs.push_back(AugSpec{});

    std::vector<ProbMask> masks;
    for (size_t k = 0; k < specs.size(); ++k) {
        const AugSpec& spec = specs[k];
        try {
            Grid view = apply_grid(image, spec, Interp::bilinear);
            auto view_prompts = transform_points(prompts, spec, image.rows, image.cols);
            ProbMask m = provider.segment(view, view_prompts,
                                          {image_id, static_cast<int>(k), spec});
            masks.push_back(invert_mask(m, spec));
        } catch (const ProviderError&) {
            // view skipped; K is effectively reduced
        }
    }
    if (masks.empty())
        throw PipelineError("generate_pseudo_label: all " + std::to_string(specs.size()) +
                            " views failed for " + image_id);

    const ProbMask fused = fuse(masks);
    const Grid entropy = entropy_map(fused);
    const UncertaintyStats stats = uncertainty_stats(entropy, fused, cfg.theta_h);
    const bool kept = cfg.image_selection ? select_image(stats, cfg) : true;

    PseudoLabel label = refine(fused, entropy, kept, cfg.pixel_weighting);
    label.stats = stats;
    label.augspecs = specs;
    label.k_effective = static_cast<int>(masks.size());
    return label;
}

void write_pseudo_label(const std::filesystem::path& out_dir, const std::string& image_id,
                        const PseudoLabel& label) {
    const auto dir = out_dir / image_id;
    std::filesystem::create_directories(dir);
    if (label.kept) write_pgm(dir / "pseudo.pgm", label.weighted_mask);
    write_pgm(dir / "entropy.pgm", label.entropy);

    json meta;
    meta["kept"] = label.kept;
    meta["U_a"] = label.stats.U_a;
    meta["U_r"] = label.stats.U_r;
    meta["high_count"] = label.stats.high_count;
    meta["conf_fg_count"] = label.stats.conf_fg_count;
    meta["K_effective"] = label.k_effective;
    meta["augspecs"] = json::array();
    for (const auto& s : label.augspecs) meta["augspecs"].push_back(augspec_to_json(s));
    std::ofstream out(dir / "meta.json");
    if (!out) throw FormatError("cannot write meta.json in " + dir.string());
    out << meta.dump(2) << "\n";
}

PseudoLabel read_pseudo_label(const std::filesystem::path& out_dir,
                              const std::string& image_id) {
    const auto dir = out_dir / image_id;
    std::ifstream in(dir / "meta.json");
    if (!in) throw NotFoundError("missing meta.json for " + image_id);
    json meta;
    try {
        in >> meta;
    } catch (const json::exception& e) {
        throw FormatError("bad meta.json for " + image_id + ": " + e.what());
    }
    PseudoLabel label;
    try {
        label.kept = meta.at("kept").get<bool>();
        label.stats.U_a = meta.at("U_a").get<double>();
        label.stats.U_r = meta.at("U_r").get<double>();
        label.stats.high_count = meta.at("high_count").get<int>();
        label.stats.conf_fg_count = meta.at("conf_fg_count").get<int>();
        label.k_effective = meta.at("K_effective").get<int>();
        for (const auto& j : meta.at("augspecs")) label.augspecs.push_back(augspec_from_json(j));
    } catch (const json::exception& e) {
        throw FormatError("bad meta.json for " + image_id + ": " + e.what());
    }
    label.entropy = read_pgm(dir / "entropy.pgm");
    if (label.kept) label.weighted_mask = read_pgm(dir / "pseudo.pgm");
    return label;
}

}  // namespace wscos
