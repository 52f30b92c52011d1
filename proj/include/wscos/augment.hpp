#pragma once

#include <utility>
#include <vector>

#include "wscos/grid.hpp"
#include "wscos/rng.hpp"

namespace wscos {

enum class Flip : int { none = 0, horizontal = 1 };
enum class Interp : int { nearest = 0, bilinear = 1 };

// One sampled geometric augmentation. Composition order is fixed:
// flip, then rotate (counter-clockwise quarter turns), then scale.
// The inverse applies the component inverses in reverse order.
struct AugSpec {
    Flip flip = Flip::none;
    int rotation = 0;   // quarter turns in {0,1,2,3}
    double scale = 1.0; // in {0.5, 1.0, 2.0}

    bool is_identity() const { return flip == Flip::none && rotation == 0 && scale == 1.0; }
    bool operator==(const AugSpec&) const = default;
};

void validate_augspec(const AugSpec& spec);

// Uniform over the 2 x 4 x 3 spec set; field draw order is flip, rotation, scale.
AugSpec sample_augspec(Rng& rng);

// All 24 specs in a fixed enumeration order (flip-major, then rotation, then scale).
std::vector<AugSpec> all_augspecs();

// Output dims of apply_grid: rotation permutes (rows, cols), scale multiplies.
std::pair<int, int> dims_after(const AugSpec& spec, int rows, int cols);

// Flips and rotations are pure index permutations; scale honors the
// interpolation choice. Scale 0.5 requires even input dims.
Grid apply_grid(const Grid& g, const AugSpec& spec, Interp interp);

// Maps mask coordinates back to the original frame (nearest interpolation).
// For scale-1.0 specs invert_mask(apply_grid(m, s), s) == m bit-exact.
Grid invert_mask(const Grid& mask, const AugSpec& spec);

// Maps point prompts into the augmented frame; same flip/rotation/scale rule
// as apply_grid (pixel-center convention, verified by the one-hot oracle).
std::vector<LabeledPoint> transform_points(const std::vector<LabeledPoint>& points,
                                           const AugSpec& spec, int rows, int cols);

}  // namespace wscos
