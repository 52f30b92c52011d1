#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "wscos/augment.hpp"
#include "wscos/grid.hpp"
#include "wscos/rng.hpp"

namespace wscos {

// Identifies one augmented view of one image, so providers can key their
// behavior (the oracle derives the view's ground truth, the file adapter
// locates the precomputed mask).
struct ViewContext {
    std::string image_id;
    int view_index = 0;
    AugSpec spec;
};

// The promptable foundation segmenter, abstracted. segment() validates the
// shared contract and delegates; implementations must be deterministic given
// (image, prompts, internal seed).
class MaskProvider {
  public:
    virtual ~MaskProvider() = default;

    ProbMask segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                     const ViewContext& ctx);

  protected:
    virtual ProbMask do_segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                                const ViewContext& ctx) = 0;
};

struct OracleConfig {
    int boundary_jitter = 0;   // max dilate radius per blob (never erodes)
    double dropout_rate = 0.0; // probability an unprompted blob is missed
    double fp_rate = 0.0;      // probability a spurious blob is added
    std::uint64_t seed = 0;
};

void validate_oracle_config(const OracleConfig& cfg);

// Noisy ground-truth corruption standing in for the foundation segmenter:
// starts from gt, never drops a blob containing a foreground prompt, applies
// per-blob dropout and boundary jitter (dilate-only), and adds spurious
// blobs. Binary output; deterministic given (gt, prompts, cfg).
ProbMask oracle_segment(const ProbMask& gt, const std::vector<LabeledPoint>& prompts,
                        const OracleConfig& cfg);

// Oracle provider over per-image ground truths: the view's gt is the original
// gt passed through ctx.spec. Failure modes are drawn at view-stable blob
// identity and depend on object size, the way a promptable segmenter's do:
// tiny objects (<= 48 px) are either invisible in every view or flicker per
// view, small objects (<= 110 px) show up at degraded confidence instead of
// vanishing, large objects occasionally vanish outright. False positives
// arrive as per-image hallucination events — scenes the segmenter misreads
// wholesale: unprompted objects vanish and spurious sites with fixed
// geometry appear, one asserted in every view plus four the views waver on.
// Jitter draws fresh per-view noise with its radius scaled to the view.
class OracleProvider : public MaskProvider {
  public:
    OracleProvider(std::unordered_map<std::string, Grid> gts, OracleConfig cfg);

  protected:
    ProbMask do_segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                        const ViewContext& ctx) override;

  private:
    std::unordered_map<std::string, Grid> gts_;
    OracleConfig cfg_;
};

// Reads <store_dir>/<image_id>/aug_<k>.pgm. Missing entry -> NotFoundError
// (the pipeline skips that view); malformed or wrong-sized file -> FormatError.
ProbMask file_lookup(const std::string& image_id, int aug_index,
                     const std::filesystem::path& store_dir);

class FileStoreProvider : public MaskProvider {
  public:
    explicit FileStoreProvider(std::filesystem::path store_dir);

  protected:
    ProbMask do_segment(const Grid& image, const std::vector<LabeledPoint>& prompts,
                        const ViewContext& ctx) override;

  private:
    std::filesystem::path store_dir_;
};

// Writes every mask as aug_<k>.pgm plus a manifest.json listing image ids,
// dims, and available aug indices.
void write_mask_store(const std::filesystem::path& store_dir,
                      const std::map<std::string, std::vector<ProbMask>>& masks);

}  // namespace wscos
