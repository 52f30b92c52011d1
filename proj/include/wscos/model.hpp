#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wscos/grid.hpp"
#include "wscos/mfg.hpp"
#include "wscos/pseudolabel.hpp"
#include "wscos/rng.hpp"
#include "wscos/tensor.hpp"

namespace wscos {

struct ConvLayer {
    TensorPtr w;  // {out_ch, in_ch, 3, 3}
    TensorPtr b;  // {out_ch}
};

// Micro segmenter: three stride-2 conv stages down to C=32 at 1/8 scale,
// feature grouping there, three upsample+conv stages back to a logit map.
struct SegmenterParams {
    int H = 0, W = 0;  // input dims, divisible by 8 (pos_embed pins 1/8 scale)
    ConvLayer enc1, enc2, enc3;  // 1->16->32->32, stride 2 each, tanh
    MFGParams mfg;               // at H/8 x W/8, C=32
    ConvLayer dec1, dec2, dec3;  // 32->16->8->1, nearest upsample before each
    int mfg_T = 3;
    bool use_mfg = true;  // off: decoder consumes the encoder output directly

    std::vector<TensorPtr> parameters() const;
};

struct TrainConfig {
    int batch_size = 8;
    double learning_rate = 1e-3;
    int epochs = 50;
    double lr_decay_factor = 0.1;  // multiply lr by this ...
    int lr_decay_interval = 80;    // ... every this many epochs
    std::uint64_t seed = 0;
    int mfg_T = 3;
    int n1 = 2, n2 = 4;
    bool use_mfg = true;
};

void validate_train_config(const TrainConfig& cfg);

struct TrainSample {
    std::string id;
    Grid image;
    SparseAnnotation ann;
    PseudoLabel label;
};

struct TrainResult {
    SegmenterParams params;
    std::vector<double> epoch_loss;  // mean per-image loss, one entry per epoch
};

SegmenterParams init_segmenter(Rng& rng, int H, int W, int mfg_T = 3, int n1 = 2, int n2 = 4,
                               bool use_mfg = true);

// Probability map {1,H,W} on the tape; image dims must match the params.
TensorPtr forward(const SegmenterParams& p, const Grid& image);

// forward without tape tracking, returned as a plain grid.
ProbMask predict(const SegmenterParams& p, const Grid& image);

// Mean binary cross-entropy over the annotated pixels only (points and
// scribble cells; points are applied last when a pixel carries both).
TensorPtr partial_ce(const TensorPtr& pred, const SparseAnnotation& ann);

// Mean soft-target cross-entropy over all pixels.
TensorPtr dense_ce(const TensorPtr& pred, const Grid& target);

TensorPtr soft_iou_loss(const TensorPtr& pred, const TensorPtr& target);
TensorPtr soft_iou_loss(const TensorPtr& pred, const Grid& target);

// Kept label: pce + ce + iou against the weighted pseudo-label; rejected
// label: pce alone (the dense terms are disconnected, not just zeroed).
TensorPtr total_loss(const TensorPtr& pred, const SparseAnnotation& ann, const PseudoLabel& label);

// Adam with shuffled minibatches and step lr decay. Deterministic per seed.
TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg);

// Binary little-endian f64 blobs in parameters() order, with an arch.json
// sidecar (written next to the checkpoint) describing dims and shapes.
void save_checkpoint(const std::filesystem::path& path, const SegmenterParams& p);
SegmenterParams load_checkpoint(const std::filesystem::path& path);

}  // namespace wscos
