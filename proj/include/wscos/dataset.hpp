#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wscos/grid.hpp"
#include "wscos/rng.hpp"

namespace wscos {

// One synthetic camouflage scene: 1-3 smooth blobs sharing the background's
// texture family, separated only by a mean-intensity gap of 0.55 * contrast.
// Every scene also carries three fixed-size satellite objects (one 52-px small
// disk and two 36-px conspicuous tiny disks at full resolution) — the hard
// cases for a promptable segmenter, which fails in size-dependent ways.
struct SceneSpec {
    int height = 64, width = 64;  // divisible by 8
    int n_objects = 1;            // 1..3
    std::uint64_t texture_seed = 0;
    double contrast = 0.4;  // 0 = fully concealed .. 0.5 = max gap
};

void validate_scene_spec(const SceneSpec& spec);

struct Sample {
    Grid image;  // quantized to k/255 so disk round trips are bit-exact
    Grid gt;     // binary, constant on 2x2 blocks
};

// Blob shapes and placement draw from `rng`; the texture field draws from
// spec.texture_seed. Ground truth is built at half resolution and upsampled,
// so every gt is constant on 2x2 blocks (which keeps 0.5-scale augmented
// views faithful).
Sample generate_sample(const SceneSpec& spec, Rng& rng);

// One random foreground point and one random background point.
SparseAnnotation sample_point_annotation(const Grid& gt, Rng& rng);

// A self-avoiding 4-connected walk of `length` pixels inside each region.
SparseAnnotation sample_scribble(const Grid& gt, Rng& rng, int length);

struct DatasetSample {
    std::string id;
    Grid image;
    Grid gt;
    SparseAnnotation ann;
};

struct GenConfig {
    int height = 64, width = 64;
    int count = 200;
    int min_objects = 1, max_objects = 3;
    double contrast = 0.4;
    std::string annotation = "points";  // or "scribble"
    int scribble_length = 16;
    std::uint64_t seed = 0;
    std::string id_prefix = "img";
};

void validate_gen_config(const GenConfig& cfg);

std::vector<DatasetSample> generate_dataset(const GenConfig& cfg);

// Layout: images/<id>.pgm, gt/<id>.pgm, ann/<id>.json (+ ann/<id>_scribble.pgm
// when present), manifest.json listing every id once.
void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSample>& samples);
std::vector<DatasetSample> read_dataset(const std::filesystem::path& dir);

}  // namespace wscos
