#include "wscos/augment.hpp"

#include <algorithm>
#include <cmath>

namespace wscos {

namespace {

const double kScales[3] = {0.5, 1.0, 2.0};

Grid flip_h(const Grid& g) {
    Grid out(g.rows, g.cols);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) out.at(r, c) = g.at(r, g.cols - 1 - c);
    return out;
}

// Counter-clockwise quarter turn: [[a,b],[c,d]] -> [[c,a],[d,b]].
Grid rot90(const Grid& g) {
    Grid out(g.cols, g.rows);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) = g.at(g.rows - 1 - c, r);
    return out;
}

Grid scale_nearest(const Grid& g, double s) {
    if (s == 2.0) {
        Grid out(g.rows * 2, g.cols * 2);
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) = g.at(r / 2, c / 2);
        return out;
    }
    // s == 0.5: top-left representative of each 2x2 block
    Grid out(g.rows / 2, g.cols / 2);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) = g.at(2 * r, 2 * c);
    return out;
}

Grid scale_bilinear(const Grid& g, double s) {
    const int rows = static_cast<int>(std::lround(g.rows * s));
    const int cols = static_cast<int>(std::lround(g.cols * s));
    Grid out(rows, cols);
    auto sample_axis = [](int dst, double s, int n, int& lo, int& hi, double& t) {
        const double src = (dst + 0.5) / s - 0.5;
        const double f = std::floor(src);
        t = src - f;
        lo = std::clamp(static_cast<int>(f), 0, n - 1);
        hi = std::clamp(static_cast<int>(f) + 1, 0, n - 1);
    };
    for (int r = 0; r < rows; ++r) {
        int r0, r1;
        double tr;
        sample_axis(r, s, g.rows, r0, r1, tr);
        for (int c = 0; c < cols; ++c) {
            int c0, c1;
            double tc;
            sample_axis(c, s, g.cols, c0, c1, tc);
            out.at(r, c) = (1 - tr) * ((1 - tc) * g.at(r0, c0) + tc * g.at(r0, c1)) +
                           tr * ((1 - tc) * g.at(r1, c0) + tc * g.at(r1, c1));
        }
    }
    return out;
}

}  // namespace

void validate_augspec(const AugSpec& spec) {
    if (spec.rotation < 0 || spec.rotation > 3)
        throw ContractViolation("AugSpec: rotation outside {0,1,2,3}");
    if (spec.scale != 0.5 && spec.scale != 1.0 && spec.scale != 2.0)
        throw ContractViolation("AugSpec: scale outside {0.5, 1.0, 2.0}");
}

AugSpec sample_augspec(Rng& rng) {
    AugSpec spec;
    spec.flip = rng.uniform_index(2) == 0 ? Flip::none : Flip::horizontal;
    spec.rotation = static_cast<int>(rng.uniform_index(4));
    spec.scale = kScales[rng.uniform_index(3)];
    return spec;
}

std::vector<AugSpec> all_augspecs() {
    std::vector<AugSpec> specs;
    for (int f = 0; f < 2; ++f)
        for (int r = 0; r < 4; ++r)
            for (double s : kScales)
                specs.push_back({f ? Flip::horizontal : Flip::none, r, s});
    return specs;
}

std::pair<int, int> dims_after(const AugSpec& spec, int rows, int cols) {
    validate_augspec(spec);
    if (spec.rotation % 2 == 1) std::swap(rows, cols);
    return {static_cast<int>(std::lround(rows * spec.scale)),
            static_cast<int>(std::lround(cols * spec.scale))};
}

Grid apply_grid(const Grid& g, const AugSpec& spec, Interp interp) {
    validate_augspec(spec);
    if (g.size() == 0) throw ContractViolation("apply_grid: empty grid");
    Grid cur = spec.flip == Flip::horizontal ? flip_h(g) : g;
    for (int k = 0; k < spec.rotation; ++k) cur = rot90(cur);
    if (spec.scale == 0.5 && (cur.rows % 2 != 0 || cur.cols % 2 != 0))
        throw ContractViolation("apply_grid: scale 0.5 requires even dims");
    if (spec.scale != 1.0)
        cur = interp == Interp::nearest ? scale_nearest(cur, spec.scale)
                                        : scale_bilinear(cur, spec.scale);
    return cur;
}

Grid invert_mask(const Grid& mask, const AugSpec& spec) {
    validate_augspec(spec);
    if (mask.size() == 0) throw ContractViolation("invert_mask: empty mask");
    Grid cur = mask;
    if (spec.scale == 2.0) {
        if (cur.rows % 2 != 0 || cur.cols % 2 != 0)
            throw ContractViolation("invert_mask: dims inconsistent with scale 2.0");
        cur = scale_nearest(cur, 0.5);
    } else if (spec.scale == 0.5) {
        cur = scale_nearest(cur, 2.0);
    }
    for (int k = 0; k < (4 - spec.rotation) % 4; ++k) cur = rot90(cur);
    if (spec.flip == Flip::horizontal) cur = flip_h(cur);
    return cur;
}

std::vector<LabeledPoint> transform_points(const std::vector<LabeledPoint>& points,
                                           const AugSpec& spec, int rows, int cols) {
    validate_augspec(spec);
    std::vector<LabeledPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        if (p.row < 0 || p.row >= rows || p.col < 0 || p.col >= cols)
            throw ContractViolation("transform_points: point out of bounds");
        int r = p.row, c = p.col, h = rows, w = cols;
        if (spec.flip == Flip::horizontal) c = w - 1 - c;
        for (int k = 0; k < spec.rotation; ++k) {
            const int nr = c, nc = h - 1 - r;
            r = nr;
            c = nc;
            std::swap(h, w);
        }
        if (spec.scale == 2.0) {
            r *= 2;
            c *= 2;
        } else if (spec.scale == 0.5) {
            r /= 2;
            c /= 2;
        }
        out.push_back({r, c, p.foreground});
    }
    return out;
}

}  // namespace wscos
