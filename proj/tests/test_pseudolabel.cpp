#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "wscos/pgm.hpp"
#include "wscos/pseudolabel.hpp"

using namespace wscos;
namespace fs = std::filesystem;

namespace {

// 16x16 disk gt, constant on 2x2 blocks so every augmented view subsamples it
// faithfully (the dataset module guarantees the same block structure).
Grid block_disk() {
    Grid half(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            half.at(r, c) = (r - 3.5) * (r - 3.5) + (c - 3.5) * (c - 3.5) <= 6.5 ? 1.0 : 0.0;
    return apply_grid(half, {Flip::none, 0, 2.0}, Interp::nearest);
}

struct FlatProvider : MaskProvider {  // degenerate: 0.5 everywhere
    ProbMask do_segment(const Grid& image, const std::vector<LabeledPoint>&,
                        const ViewContext&) override {
        return Grid(image.rows, image.cols, 0.5);
    }
};

struct RecordingOracle : MaskProvider {  // noiseless oracle that logs each view mask
    Grid gt;
    std::map<int, ProbMask> seen;
    explicit RecordingOracle(Grid g) : gt(std::move(g)) {}
    ProbMask do_segment(const Grid&, const std::vector<LabeledPoint>&,
                        const ViewContext& ctx) override {
        Grid view = apply_grid(gt, ctx.spec, Interp::nearest);
        seen[ctx.view_index] = view;
        return view;
    }
};

struct FailingViews : MaskProvider {  // provider error on selected view indices
    Grid gt;
    int fail_from;
    FailingViews(Grid g, int from) : gt(std::move(g)), fail_from(from) {}
    ProbMask do_segment(const Grid&, const std::vector<LabeledPoint>&,
                        const ViewContext& ctx) override {
        if (ctx.view_index >= fail_from) throw ProviderError("view unavailable");
        return apply_grid(gt, ctx.spec, Interp::nearest);
    }
};

}  // namespace

TEST_CASE("fuse: idempotent mean, two-element example, counting oracle") {
    Grid m(2, 2);
    m.at(0, 1) = 1;
    m.at(1, 0) = 1;
    CHECK(fuse({m, m, m}) == m);

    Grid a(2, 2), b(2, 2);
    a.at(0, 1) = a.at(1, 0) = 1;
    b.at(0, 1) = b.at(1, 1) = 1;
    Grid f = fuse({a, b});
    CHECK(f.v == std::vector<double>{0, 1, 0.5, 0.5});

    // 12 noisy binary masks: fused values are exactly count/12
    Grid gt = block_disk();
    std::vector<ProbMask> masks;
    for (std::uint64_t s = 0; s < 12; ++s) {
        OracleConfig cfg;
        cfg.boundary_jitter = 2;
        cfg.dropout_rate = 0.2;
        cfg.fp_rate = 0.3;
        cfg.seed = s;
        masks.push_back(oracle_segment(gt, {{8, 8, true}}, cfg));
    }
    Grid fused = fuse(masks);
    for (size_t i = 0; i < fused.size(); ++i) {
        int count = 0;
        for (const auto& mk : masks) count += mk.v[i] != 0.0;
        CHECK(fused.v[i] == count * (1.0 / 12.0));
    }

    // permutation invariance (exact on binary masks)
    std::vector<ProbMask> shuffled(masks.rbegin(), masks.rend());
    CHECK(fuse(shuffled) == fused);

    Grid odd(2, 3);
    CHECK_THROWS_AS(fuse({m, odd}), ContractViolation);
    CHECK_THROWS_AS(fuse({}), ContractViolation);
}

TEST_CASE("entropy_map: pinned values, symmetry, vote property") {
    Grid p(1, 4);
    p.v = {0.5, 0.0, 1.0, 0.11};
    Grid e = entropy_map(p);
    CHECK(e.v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.v[1] == 0.0);
    CHECK(e.v[2] == 0.0);
    CHECK(e.v[3] == doctest::Approx(0.4999).epsilon(1e-3));

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double q = rng.uniform();
        Grid g1(1, 1, q), g2(1, 1, 1.0 - q);
        CHECK(std::abs(entropy_map(g1).v[0] - entropy_map(g2).v[0]) <= 1e-12);
        CHECK(entropy_map(g1).v[0] >= 0.0);
        CHECK(entropy_map(g1).v[0] <= 1.0);
    }

    // K=12 binary views, theta_h=0.9: high-uncertainty iff votes in {4..8}
    for (int votes = 0; votes <= 12; ++votes) {
        Grid f(1, 1, votes * (1.0 / 12.0));
        const bool high = entropy_map(f).v[0] > 0.9;
        CHECK(high == (votes >= 4 && votes <= 8));
    }
}

TEST_CASE("uncertainty_stats and select_image") {
    Grid conf(4, 4);
    conf.at(0, 0) = 1.0;
    UncertaintyStats s0 = uncertainty_stats(entropy_map(conf), conf, 0.9);
    CHECK(s0.U_a == 0.0);
    CHECK(s0.U_r == 0.0);

    Grid half(4, 4, 0.5);
    UncertaintyStats s1 = uncertainty_stats(entropy_map(half), half, 0.9);
    CHECK(s1.U_a == 1.0);
    CHECK(s1.U_r == 1.0);

    // 100 pixels: 8 high-uncertainty, 24 confident-fg
    Grid ent(10, 10, 0.1), fus(10, 10, 0.1);
    for (int i = 0; i < 8; ++i) ent.v[i] = 0.95;
    for (int i = 10; i < 34; ++i) fus.v[i] = 0.8;
    UncertaintyStats s2 = uncertainty_stats(ent, fus, 0.9);
    CHECK(s2.high_count == 8);
    CHECK(s2.conf_fg_count == 24);
    CHECK(s2.U_a == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(s2.U_r == doctest::Approx(0.25).epsilon(1e-12));

    PipelineConfig cfg;
    CHECK(select_image({0.05, 0.3, 0, 0}, cfg));
    CHECK_FALSE(select_image({0.15, 0.3, 0, 0}, cfg));
    CHECK_FALSE(select_image({0.05, 0.6, 0, 0}, cfg));
    CHECK_FALSE(select_image({0.1, 0.3, 0, 0}, cfg));  // thresholds are strict

    // monotonicity: lowering tau never un-rejects
    for (double ua : {0.02, 0.08, 0.12}) {
        for (double ur : {0.1, 0.4, 0.7}) {
            bool prev = true;
            for (int i = 20; i >= 1; --i) {
                PipelineConfig c;
                c.tau_a = 0.1 * i / 20;
                c.tau_r = 0.5 * i / 20;
                const bool keep = select_image({ua, ur, 0, 0}, c);
                CHECK((prev || !keep));  // once rejected, stays rejected as taus shrink
                prev = keep;
            }
        }
    }
}

TEST_CASE("refine: pinned Eq. 3/5 values and the plw toggle") {
    Grid fused(1, 3);
    fused.v = {1.0, 0.5, 0.75};
    Grid ent = entropy_map(fused);
    PseudoLabel lab = refine(fused, ent, true);
    CHECK(lab.weighted_mask.v[0] == 1.0);
    CHECK(lab.weighted_mask.v[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lab.weighted_mask.v[2] == doctest::Approx(0.1415415).epsilon(1e-6));
    CHECK(lab.kept);

    PseudoLabel raw = refine(fused, ent, true, false);
    CHECK(raw.weighted_mask.v == std::vector<double>{1.0, 0.0, 1.0});  // binarized at 0.5
}

TEST_CASE("nine_box_points: degenerate, full, and L-shaped boxes") {
    Rng rng(5);
    ScribbleGrid single(12, 12);
    single.at(4, 7) = ScribbleLabel::foreground;
    auto pts = nine_box_points(single, true, rng);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].row == 4);
    CHECK(pts[0].col == 7);

    ScribbleGrid full(12, 12);
    for (int r = 2; r < 11; ++r)
        for (int c = 1; c < 10; ++c) full.at(r, c) = ScribbleLabel::foreground;
    auto nine = nine_box_points(full, true, rng);
    REQUIRE(nine.size() == 9);
    for (size_t i = 0; i < 9; ++i) {
        CHECK(full.at(nine[i].row, nine[i].col) == ScribbleLabel::foreground);
        // cell-membership oracle: bbox rows 2..10, cols 1..9, each cell 3x3
        CHECK((nine[i].row - 2) / 3 == int(i) / 3);
        CHECK((nine[i].col - 1) / 3 == int(i) % 3);
    }

    // L occupying the left column and bottom row of cells: 5 occupied cells
    ScribbleGrid ell(18, 18);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 3; ++c) ell.at(r, c) = ScribbleLabel::background;
    for (int r = 6; r < 9; ++r)
        for (int c = 3; c < 9; ++c) ell.at(r, c) = ScribbleLabel::background;
    auto five = nine_box_points(ell, false, rng);
    CHECK(five.size() == 5);
    for (const auto& p : five) CHECK(ell.at(p.row, p.col) == ScribbleLabel::background);

    CHECK_THROWS_AS(nine_box_points(ell, true, rng), ContractViolation);
}

TEST_CASE("generate_pseudo_label: noiseless fixed point and determinism") {
    Grid gt = block_disk();
    OracleProvider prov({{"img", gt}}, OracleConfig{});
    SparseAnnotation ann;
    ann.points = {{8, 8, true}, {0, 0, false}};
    PipelineConfig cfg;
    cfg.K = 5;
    cfg.seed = 11;

    PseudoLabel lab = generate_pseudo_label("img", gt, ann, prov, cfg);
    CHECK(lab.kept);
    CHECK(lab.weighted_mask == gt);
    CHECK(lab.stats.U_a == 0.0);
    CHECK(lab.stats.U_r == 0.0);
    CHECK(lab.k_effective == 5);
    CHECK(lab.augspecs.size() == 5);

    OracleProvider prov2({{"img", gt}}, OracleConfig{});
    PseudoLabel again = generate_pseudo_label("img", gt, ann, prov2, cfg);
    CHECK(again.weighted_mask == lab.weighted_mask);
    CHECK(again.fused == lab.fused);
    CHECK(again.augspecs == lab.augspecs);

    SparseAnnotation bg_only;
    bg_only.points = {{0, 0, false}};
    CHECK_THROWS_AS(generate_pseudo_label("img", gt, bg_only, prov, cfg), ContractViolation);
}

TEST_CASE("generate_pseudo_label: scribble prompts drive the same fixed point") {
    Grid gt = block_disk();
    OracleProvider prov({{"img", gt}}, OracleConfig{});
    SparseAnnotation ann;
    ann.scribble = ScribbleGrid(16, 16);
    for (int c = 6; c <= 9; ++c) ann.scribble.at(8, c) = ScribbleLabel::foreground;
    for (int c = 0; c <= 2; ++c) ann.scribble.at(0, c) = ScribbleLabel::background;
    PipelineConfig cfg;
    cfg.K = 4;
    cfg.seed = 3;
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, prov, cfg);
    CHECK(lab.kept);
    CHECK(lab.weighted_mask == gt);
}

TEST_CASE("generate_pseudo_label: degenerate provider forces rejection") {
    Grid gt = block_disk();
    FlatProvider flat;
    SparseAnnotation ann;
    ann.points = {{8, 8, true}};
    PipelineConfig cfg;
    cfg.seed = 2;
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, flat, cfg);
    CHECK_FALSE(lab.kept);
    CHECK(lab.stats.U_a == 1.0);

    cfg.image_selection = false;
    CHECK(generate_pseudo_label("img", gt, ann, flat, cfg).kept);
}

TEST_CASE("generate_pseudo_label: ablation toggles") {
    Grid gt = block_disk();
    OracleProvider prov({{"img", gt}}, OracleConfig{});
    SparseAnnotation ann;
    ann.points = {{8, 8, true}};
    PipelineConfig cfg;
    cfg.seed = 4;
    cfg.fusion = false;
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, prov, cfg);
    CHECK(lab.k_effective == 1);
    REQUIRE(lab.augspecs.size() == 1);
    CHECK(lab.augspecs[0].is_identity());

    cfg.fusion = true;
    cfg.pixel_weighting = false;
    PseudoLabel raw = generate_pseudo_label("img", gt, ann, prov, cfg);
    CHECK(raw.weighted_mask == raw.fused);
}

TEST_CASE("generate_pseudo_label: failed views shrink K, all-failed errors") {
    Grid gt = block_disk();
    SparseAnnotation ann;
    ann.points = {{8, 8, true}};
    PipelineConfig cfg;
    cfg.K = 4;
    cfg.seed = 9;

    FailingViews partial(gt, 3);
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, partial, cfg);
    CHECK(lab.k_effective == 3);
    CHECK(lab.kept);
    CHECK(lab.weighted_mask == gt);  // noiseless surviving views still agree

    FailingViews none(gt, 0);
    CHECK_THROWS_AS(generate_pseudo_label("img", gt, ann, none, cfg), PipelineError);
}

TEST_CASE("generate_pseudo_label: file store with a missing view fuses the rest") {
    Grid gt = block_disk();
    SparseAnnotation ann;
    ann.points = {{8, 8, true}};
    PipelineConfig cfg;
    cfg.K = 4;
    cfg.seed = 13;

    RecordingOracle rec(gt);
    generate_pseudo_label("img", gt, ann, rec, cfg);
    REQUIRE(rec.seen.size() == 4);

    const fs::path dir = fs::temp_directory_path() / "wscos_test_pl_store";
    fs::remove_all(dir);
    write_mask_store(dir, {{"img", {rec.seen[0], rec.seen[1], rec.seen[2]}}});  // aug_3 missing

    FileStoreProvider files(dir);
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, files, cfg);
    CHECK(lab.k_effective == 3);
    CHECK(lab.weighted_mask == gt);
    fs::remove_all(dir);
}

TEST_CASE("pseudo-label store round trip") {
    Grid gt = block_disk();
    OracleConfig noise;
    noise.boundary_jitter = 1;
    noise.seed = 21;
    OracleProvider prov({{"img", gt}}, noise);
    SparseAnnotation ann;
    ann.points = {{8, 8, true}};
    PipelineConfig cfg;
    cfg.seed = 6;
    PseudoLabel lab = generate_pseudo_label("img", gt, ann, prov, cfg);

    const fs::path dir = fs::temp_directory_path() / "wscos_test_pl_rt";
    fs::remove_all(dir);
    write_pseudo_label(dir, "img", lab);
    PseudoLabel back = read_pseudo_label(dir, "img");
    CHECK(back.kept == lab.kept);
    CHECK(back.stats.U_a == doctest::Approx(lab.stats.U_a).epsilon(1e-12));
    CHECK(back.stats.U_r == doctest::Approx(lab.stats.U_r).epsilon(1e-12));
    CHECK(back.k_effective == lab.k_effective);
    CHECK(back.augspecs == lab.augspecs);
    CHECK(back.entropy == quantize_u8(lab.entropy));
    if (lab.kept) CHECK(back.weighted_mask == quantize_u8(lab.weighted_mask));

    CHECK_THROWS_AS(read_pseudo_label(dir, "ghost"), NotFoundError);
    fs::remove_all(dir);
}
