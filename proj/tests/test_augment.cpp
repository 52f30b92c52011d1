#include <doctest.h>

#include <cmath>

#include "wscos/augment.hpp"

using namespace wscos;

namespace {

Grid random_mask(Rng& rng, int rows, int cols) {
    Grid g(rows, cols);
    for (double& v : g.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    return g;
}

// Constant on 2x2 blocks, so a x0.5 subsample round trip is lossless.
Grid block_mask(Rng& rng, int rows, int cols) {
    Grid g(rows, cols);
    for (int r = 0; r < rows; r += 2)
        for (int c = 0; c < cols; c += 2) {
            const double v = rng.uniform() < 0.5 ? 0.0 : 1.0;
            g.at(r, c) = g.at(r, c + 1) = g.at(r + 1, c) = g.at(r + 1, c + 1) = v;
        }
    return g;
}

std::pair<int, int> argmax_cell(const Grid& g) {
    int br = 0, bc = 0;
    double best = g.at(0, 0);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            if (g.at(r, c) > best) {
                best = g.at(r, c);
                br = r;
                bc = c;
            }
    return {br, bc};
}

double binary_iou(const Grid& a, const Grid& b) {
    int inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool x = a.v[i] > 0.5, y = b.v[i] > 0.5;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 1.0 : double(inter) / uni;
}

}  // namespace

TEST_CASE("sample_augspec: determinism and uniformity") {
    {
        Rng r1(123), r2(123);
        CHECK(sample_augspec(r1) == sample_augspec(r2));
    }

    Rng rng(7);
    int rot_counts[4] = {0, 0, 0, 0};
    int identity = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const AugSpec s = sample_augspec(rng);
        ++rot_counts[s.rotation];
        identity += s.is_identity();
    }
    for (int k = 0; k < 4; ++k) {
        CHECK(rot_counts[k] >= int(0.22 * n));
        CHECK(rot_counts[k] <= int(0.28 * n));
    }
    // identity probability 1/(2*4*3)
    CHECK(identity >= int(n * (1.0 / 24 - 0.012)));
    CHECK(identity <= int(n * (1.0 / 24 + 0.012)));
}

TEST_CASE("apply_grid: identity, pinned rotation, nearest upscale") {
    Rng rng(3);
    Grid g = random_mask(rng, 6, 4);
    CHECK(apply_grid(g, AugSpec{}, Interp::nearest) == g);

    Grid q(2, 2);
    q.at(0, 0) = 1;  // a
    q.at(0, 1) = 2;  // b
    q.at(1, 0) = 3;  // c
    q.at(1, 1) = 4;  // d
    Grid r = apply_grid(q, {Flip::none, 1, 1.0}, Interp::nearest);
    CHECK(r.at(0, 0) == 3);  // [[c,a],[d,b]]
    CHECK(r.at(0, 1) == 1);
    CHECK(r.at(1, 0) == 4);
    CHECK(r.at(1, 1) == 2);

    Grid ramp(4, 4);
    for (int i = 0; i < 16; ++i) ramp.v[i] = i;
    Grid up = apply_grid(ramp, {Flip::none, 0, 2.0}, Interp::nearest);
    CHECK(up.rows == 8);
    for (int r2 = 0; r2 < 8; ++r2)
        for (int c2 = 0; c2 < 8; ++c2) CHECK(up.at(r2, c2) == ramp.at(r2 / 2, c2 / 2));

    Grid odd(3, 4, 1.0);
    CHECK_THROWS_AS(apply_grid(odd, {Flip::none, 0, 0.5}, Interp::nearest), ContractViolation);
    CHECK_THROWS_AS(apply_grid(odd, {Flip::none, 0, 3.0}, Interp::nearest), ContractViolation);
}

TEST_CASE("transform_points: pinned examples and bounds") {
    std::vector<LabeledPoint> pts = {{1, 2, true}};
    auto same = transform_points(pts, AugSpec{}, 4, 4);
    CHECK(same[0].row == 1);
    CHECK(same[0].col == 2);
    CHECK(same[0].foreground);

    auto r180 = transform_points({{0, 0, false}}, {Flip::none, 2, 1.0}, 4, 4);
    CHECK(r180[0].row == 3);
    CHECK(r180[0].col == 3);
    CHECK_FALSE(r180[0].foreground);

    auto up = transform_points(pts, {Flip::none, 0, 2.0}, 4, 4);
    CHECK(up[0].row == 2);
    CHECK(up[0].col == 4);

    CHECK_THROWS_AS(transform_points({{4, 0, true}}, AugSpec{}, 4, 4), ContractViolation);
}

TEST_CASE("invert_mask: identity, permutation inverse, scale round trips") {
    Rng rng(9);
    Grid m = random_mask(rng, 8, 6);
    CHECK(invert_mask(m, AugSpec{}) == m);

    const AugSpec s{Flip::horizontal, 1, 1.0};
    CHECK(invert_mask(apply_grid(m, s, Interp::nearest), s) == m);

    // every scale-1.0 spec is a pure permutation: bit-exact round trip
    for (const AugSpec& spec : all_augspecs()) {
        if (spec.scale != 1.0) continue;
        Grid mm = random_mask(rng, 6, 8);
        CHECK(invert_mask(apply_grid(mm, spec, Interp::nearest), spec) == mm);
    }
    // scale 2.0: block-subsample of block-duplicate, exact for any mask
    for (const AugSpec& spec : all_augspecs()) {
        if (spec.scale != 2.0) continue;
        Grid mm = random_mask(rng, 6, 8);
        CHECK(invert_mask(apply_grid(mm, spec, Interp::nearest), spec) == mm);
    }
    // scale 0.5: exact on block-constant masks
    for (const AugSpec& spec : all_augspecs()) {
        if (spec.scale != 0.5) continue;
        Grid mm = block_mask(rng, 6, 8);
        CHECK(invert_mask(apply_grid(mm, spec, Interp::nearest), spec) == mm);
    }
}

TEST_CASE("invert_mask: 16x16 disk survives a x0.5 round trip at IoU >= 0.8") {
    Grid disk(16, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            disk.at(r, c) = (r - 7.5) * (r - 7.5) + (c - 7.5) * (c - 7.5) <= 25.0 ? 1.0 : 0.0;
    const AugSpec s{Flip::none, 0, 0.5};
    Grid back = invert_mask(apply_grid(disk, s, Interp::nearest), s);
    CHECK(binary_iou(back, disk) >= 0.8);
}

TEST_CASE("dimension law and point/grid commutation for all 24 specs") {
    Rng rng(17);
    Grid img = random_mask(rng, 8, 8);
    for (const AugSpec& spec : all_augspecs()) {
        auto [er, ec] = dims_after(spec, 8, 8);
        Grid a = apply_grid(img, spec, Interp::nearest);
        CHECK(a.rows == er);
        CHECK(a.cols == ec);

        // one-hot oracle: bilinear when downscaling so no pixel vanishes
        const Interp interp = spec.scale < 1.0 ? Interp::bilinear : Interp::nearest;
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                Grid onehot(8, 8);
                onehot.at(r, c) = 1.0;
                auto moved = transform_points({{r, c, true}}, spec, 8, 8);
                auto [ar, ac] = argmax_cell(apply_grid(onehot, spec, interp));
                CHECK(moved[0].row == ar);
                CHECK(moved[0].col == ac);
            }
    }
}
