#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wscos/augment.hpp"
#include "wscos/grid.hpp"
#include "wscos/provider.hpp"

namespace wscos {

struct UncertaintyStats {
    double U_a = 0.0;      // high-uncertainty pixels / all pixels
    double U_r = 0.0;      // high-uncertainty / (high-uncertainty + confident-fg)
    int high_count = 0;
    int conf_fg_count = 0;
};

struct PipelineConfig {
    int K = 12;
    double tau_a = 0.1;
    double tau_r = 0.5;
    double theta_h = 0.9;
    std::uint64_t seed = 0;
    // ablation toggles (CLI --no-fusion / --no-plw / --no-ils)
    bool fusion = true;           // off: a single identity view stands in for the ensemble
    bool pixel_weighting = true;  // off: the label is the fused mask, unweighted
    bool image_selection = true;  // off: every image is kept
};

void validate_pipeline_config(const PipelineConfig& cfg);

struct PseudoLabel {
    ProbMask weighted_mask;  // Y-hat; meaningful only when kept
    ProbMask fused;
    Grid entropy;
    bool kept = false;
    UncertaintyStats stats;
    std::vector<AugSpec> augspecs;
    int k_effective = 0;  // views that produced a mask
};

// Per-pixel arithmetic mean of same-dims masks.
ProbMask fuse(const std::vector<ProbMask>& masks);

// Per-pixel binary entropy, base-2 logarithm (so values span [0,1] and the
// 0.9 high-uncertainty threshold is meaningful); 0*log0 = 0.
Grid entropy_map(const ProbMask& fused);

// high: entropy strictly above theta_h; confident fg: fused > 0.5 with
// entropy <= theta_h.
UncertaintyStats uncertainty_stats(const Grid& entropy, const ProbMask& fused, double theta_h);

// Keep iff U_a < tau_a and U_r < tau_r.
bool select_image(const UncertaintyStats& stats, const PipelineConfig& cfg);

// weighted_mask = (1 - entropy) * fused (elementwise); when pixel_weighting
// is off the fused mask is instead majority-binarized at 0.5, the usual way
// to consume multi-view masks without an uncertainty model.
PseudoLabel refine(const ProbMask& fused, const Grid& entropy, bool kept,
                   bool pixel_weighting = true);

// Nine-box prompting: split the bounding box of the label's scribble pixels
// into a 3x3 grid and sample one scribble pixel per occupied cell.
std::vector<LabeledPoint> nine_box_points(const ScribbleGrid& scribble, bool foreground, Rng& rng);

// Full per-image refinement: sample K augmentations, segment each view
// through the provider, inverse-transform, fuse, weight, select. Views whose
// provider call fails are skipped; if all K fail -> PipelineError.
PseudoLabel generate_pseudo_label(const std::string& image_id, const Grid& image,
                                  const SparseAnnotation& ann, MaskProvider& provider,
                                  const PipelineConfig& cfg);

// Store layout: <out_dir>/<image_id>/pseudo.pgm (kept labels only),
// entropy.pgm, meta.json {kept, U_a, U_r, K_effective, augspecs}.
void write_pseudo_label(const std::filesystem::path& out_dir, const std::string& image_id,
                        const PseudoLabel& label);
PseudoLabel read_pseudo_label(const std::filesystem::path& out_dir, const std::string& image_id);

}  // namespace wscos
