#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wscos/model.hpp"

using namespace wscos;
namespace fs = std::filesystem;

namespace {

Grid square_gt(int dim, int top, int left, int side) {
    Grid g(dim, dim);
    for (int r = top; r < top + side; ++r)
        for (int c = left; c < left + side; ++c) g.at(r, c) = 1.0;
    return g;
}

// easy-contrast scene: bright object on dark ground
Grid easy_image(const Grid& gt) {
    Grid img(gt.rows, gt.cols);
    for (size_t i = 0; i < gt.size(); ++i) img.v[i] = 0.1 + 0.8 * gt.v[i];
    return img;
}

TrainSample make_sample(const std::string& id, int dim, int top, int left) {
    TrainSample s;
    s.id = id;
    Grid gt = square_gt(dim, top, left, 6);
    s.image = easy_image(gt);
    s.ann.points = {{top + 2, left + 2, true}, {(top + 8) % dim, (left + 9) % dim, false}};
    s.label.weighted_mask = gt;
    s.label.kept = true;
    return s;
}

double clip(double p) { return std::min(1.0 - 1e-7, std::max(1e-7, p)); }

double ce_scalar(double p, double t) {
    return -(t * std::log(clip(p)) + (1.0 - t) * std::log(1.0 - clip(p)));
}

}  // namespace

TEST_CASE("forward: shape, range, determinism, zeroed final layer") {
    Rng rng(1);
    SegmenterParams p = init_segmenter(rng, 64, 64);
    Grid img(64, 64, 0.3);
    TensorPtr out = forward(p, img);
    CHECK(out->shape == std::vector<size_t>{1, 64, 64});
    for (double v : out->data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(forward(p, img)->data == out->data);
    CHECK(predict(p, img).v == out->data);

    for (double& w : p.dec3.w->data) w = 0.0;
    for (double& b : p.dec3.b->data) b = 0.0;
    for (double v : predict(p, img).v) CHECK(v == 0.5);

    CHECK_THROWS_AS(forward(p, Grid(32, 64, 0.0)), ContractViolation);
    CHECK_THROWS_AS(init_segmenter(rng, 60, 64), ContractViolation);
}

TEST_CASE("partial_ce: pinned values, precedence, scalar oracle") {
    // perfect prediction at the two labeled points
    Grid g(4, 4, 0.5);
    g.at(0, 0) = 1.0;
    g.at(3, 3) = 0.0;
    TensorPtr pred = Tensor::from_data({1, 4, 4}, g.v);
    SparseAnnotation two;
    two.points = {{0, 0, true}, {3, 3, false}};
    CHECK(partial_ce(pred, two)->data[0] < 1e-6);

    // flat 0.5 prediction: ln 2 regardless of labels
    TensorPtr flat = Tensor::full({1, 4, 4}, 0.5);
    CHECK(partial_ce(flat, two)->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // a point overrides the scribble cell it lands on
    SparseAnnotation both;
    both.scribble = ScribbleGrid(4, 4);
    both.scribble.at(1, 1) = ScribbleLabel::background;
    both.points = {{1, 1, true}};
    TensorPtr p9 = Tensor::full({1, 4, 4}, 0.9);
    CHECK(partial_ce(p9, both)->data[0] == doctest::Approx(ce_scalar(0.9, 1.0)).epsilon(1e-12));

    // random case against a scalar-loop oracle
    Rng rng(8);
    Grid rp(6, 6);
    for (double& v : rp.v) v = rng.uniform();
    SparseAnnotation ann;
    ann.scribble = ScribbleGrid(6, 6);
    for (int i = 0; i < 6; ++i) ann.scribble.at(i, 1) = ScribbleLabel::foreground;
    for (int i = 0; i < 4; ++i) ann.scribble.at(i, 4) = ScribbleLabel::background;
    ann.points = {{5, 5, true}, {0, 0, false}};
    double want = 0.0;
    for (int i = 0; i < 6; ++i) want += ce_scalar(rp.at(i, 1), 1.0);
    for (int i = 0; i < 4; ++i) want += ce_scalar(rp.at(i, 4), 0.0);
    want += ce_scalar(rp.at(5, 5), 1.0) + ce_scalar(rp.at(0, 0), 0.0);
    want /= 12.0;
    TensorPtr rt = Tensor::from_data({1, 6, 6}, rp.v);
    CHECK(partial_ce(rt, ann)->data[0] == doctest::Approx(want).epsilon(1e-10));

    SparseAnnotation none;
    CHECK_THROWS_AS(partial_ce(rt, none), ContractViolation);
    SparseAnnotation oob;
    oob.points = {{6, 0, true}};
    CHECK_THROWS_AS(partial_ce(rt, oob), ContractViolation);
}

TEST_CASE("soft_iou_loss: identity, disjoint closed form, symmetry") {
    Grid bin(4, 4);
    for (int i = 0; i < 5; ++i) bin.v[i] = 1.0;
    TensorPtr b = Tensor::from_data({1, 4, 4}, bin.v);
    CHECK(std::abs(soft_iou_loss(b, bin)->data[0]) <= 1e-9);

    TensorPtr ones = Tensor::full({1, 4, 4}, 1.0);
    Grid zeros(4, 4);
    const double n = 16.0;
    CHECK(soft_iou_loss(ones, zeros)->data[0] == doctest::Approx(1.0 - 1.0 / (n + 1.0)).epsilon(1e-12));

    Rng rng(3);
    TensorPtr x = Tensor::randn({1, 4, 4}, rng, 0.25);
    TensorPtr y = Tensor::randn({1, 4, 4}, rng, 0.25);
    CHECK(soft_iou_loss(x, y)->data[0] == doctest::Approx(soft_iou_loss(y, x)->data[0]).epsilon(1e-12));
}

TEST_CASE("dense_ce is minimized at pred == target (grid search)") {
    for (double t : {0.1, 0.37, 0.5, 0.82}) {
        Grid target(1, 1, t);
        double best_p = -1, best = 1e300;
        for (int i = 1; i <= 999; ++i) {
            const double p = i / 1000.0;
            const double v = dense_ce(Tensor::from_data({1, 1, 1}, {p}), target)->data[0];
            if (v < best) {
                best = v;
                best_p = p;
            }
        }
        CHECK(std::abs(best_p - t) <= 0.0015);
    }
}

TEST_CASE("total_loss: gating, term-wise oracle, dense disconnection") {
    Grid gt = square_gt(4, 0, 0, 2);
    TensorPtr perfect = Tensor::from_data({1, 4, 4}, gt.v);
    SparseAnnotation ann;
    ann.points = {{0, 0, true}, {3, 3, false}};
    PseudoLabel kept;
    kept.weighted_mask = gt;
    kept.kept = true;
    CHECK(total_loss(perfect, ann, kept)->data[0] < 1e-6);

    Rng rng(9);
    Grid rnd(4, 4);
    for (double& v : rnd.v) v = rng.uniform();
    TensorPtr pred = Tensor::from_data({1, 4, 4}, rnd.v);
    const double want = partial_ce(pred, ann)->data[0] + dense_ce(pred, kept.weighted_mask)->data[0] +
                        soft_iou_loss(pred, kept.weighted_mask)->data[0];
    CHECK(total_loss(pred, ann, kept)->data[0] == doctest::Approx(want).epsilon(1e-12));

    PseudoLabel rejected;
    rejected.weighted_mask = gt;
    rejected.kept = false;
    TensorPtr leaf = Tensor::from_data({1, 4, 4}, rnd.v, true);
    TensorPtr loss = total_loss(leaf, ann, rejected);
    CHECK(loss->data[0] == partial_ce(pred, ann)->data[0]);
    backward(loss);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const double g = leaf->grad[static_cast<size_t>(r) * 4 + c];
            const bool labeled = (r == 0 && c == 0) || (r == 3 && c == 3);
            if (labeled)
                CHECK(g != 0.0);
            else
                CHECK(g == 0.0);  // dense terms are truly disconnected
        }
}

TEST_CASE("loss gradients pass central differences") {
    Rng rng(14);
    Grid target(3, 3);
    for (double& v : target.v) v = rng.uniform();
    SparseAnnotation ann;
    ann.points = {{0, 1, true}, {2, 2, false}};
    PseudoLabel kept;
    kept.weighted_mask = target;
    kept.kept = true;
    std::vector<double> vals;
    for (int i = 0; i < 9; ++i) vals.push_back(0.1 + 0.8 * rng.uniform());
    TensorPtr leaf = Tensor::from_data({1, 3, 3}, vals, true);
    const double err =
        grad_check([&] { return total_loss(leaf, ann, kept); }, {leaf}, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("segmenter gradients: spot check through every stage") {
    Rng rng(15);
    SegmenterParams p = init_segmenter(rng, 8, 8);
    Grid gt = square_gt(8, 2, 2, 4);
    Grid img = easy_image(gt);
    SparseAnnotation ann;
    ann.points = {{3, 3, true}, {0, 7, false}};
    PseudoLabel lab;
    lab.weighted_mask = gt;
    lab.kept = true;
    // one tensor per stage keeps the check fast; the acceptance suite
    // sweeps the full parameter set on a 16x16 input
    std::vector<TensorPtr> probe{p.enc1.w, p.enc2.b,  p.mfg.g1.prototypes, p.mfg.gate_w,
                                 p.dec1.b, p.dec3.w, p.mfg.g2.gru.b_h};
    const double err =
        grad_check([&] { return total_loss(forward(p, img), ann, lab); }, probe, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("train: smoke, mixed kept/rejected, loss decreases, determinism") {
    std::vector<TrainSample> data;
    for (int i = 0; i < 8; ++i) data.push_back(make_sample("s" + std::to_string(i), 16, 2 + i % 3, 2 + (i * 2) % 5));
    data[5].label.kept = false;  // a rejected image must not break batching

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 30;
    cfg.seed = 42;
    TrainResult res = train(data, cfg);
    REQUIRE(res.epoch_loss.size() == 30);
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
    for (size_t i = 0; i + 10 <= res.epoch_loss.size(); ++i)
        CHECK(res.epoch_loss[i + 9] <= res.epoch_loss[i]);

    TrainResult again = train(data, cfg);
    auto pa = res.params.parameters(), pb = again.params.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);

    cfg.seed = 43;
    TrainResult other = train(data, cfg);
    CHECK(other.params.parameters()[0]->data != pa[0]->data);

    CHECK_THROWS_AS(train({}, cfg), ContractViolation);
    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train(data, bad), ContractViolation);
}

TEST_CASE("checkpoint: round trip and corruption surfaces") {
    Rng rng(21);
    SegmenterParams p = init_segmenter(rng, 16, 16);
    const fs::path dir = fs::temp_directory_path() / "wscos_test_ckpt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path bin = dir / "checkpoint.bin";
    save_checkpoint(bin, p);

    SegmenterParams q = load_checkpoint(bin);
    auto pa = p.parameters(), qa = q.parameters();
    REQUIRE(pa.size() == qa.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == qa[i]->data);
    Grid img(16, 16, 0.4);
    CHECK(predict(p, img) == predict(q, img));

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), NotFoundError);

    // truncate the blob
    fs::resize_file(bin, fs::file_size(bin) / 2);
    CHECK_THROWS_AS(load_checkpoint(bin), FormatError);

    // corrupt the magic
    save_checkpoint(bin, p);
    {
        std::ofstream f(bin, std::ios::binary | std::ios::in);
        f.seekp(0);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(bin), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("model: w/o-MFG arm bypasses grouping") {
    Rng rng(11);
    SegmenterParams full = init_segmenter(rng, 16, 16);
    Rng rng2(11);
    SegmenterParams plain = init_segmenter(rng2, 16, 16, 3, 2, 4, false);

    // same draw order, so the shared layers carry identical weights
    CHECK(full.enc1.w->data == plain.enc1.w->data);
    CHECK(full.dec3.w->data == plain.dec3.w->data);
    CHECK(plain.parameters().size() + full.mfg.parameters().size() == full.parameters().size());

    Grid img(16, 16, 0.3);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) img.at(r, c) = 0.1 + 0.05 * ((r * 7 + c * 3) % 13);
    ProbMask a = predict(full, img), b = predict(plain, img);
    CHECK(a.rows == b.rows);
    bool differ = false;
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(b.v[i] > 0.0);
        CHECK(b.v[i] < 1.0);
        differ |= a.v[i] != b.v[i];
    }
    CHECK(differ);

    const fs::path dir = fs::temp_directory_path() / "wscos_test_ckpt_womfg";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin", plain);
    SegmenterParams back = load_checkpoint(dir / "checkpoint.bin");
    CHECK_FALSE(back.use_mfg);
    CHECK(predict(back, img) == b);
    fs::remove_all(dir);

    TrainConfig cfg;
    cfg.use_mfg = false;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 3;
    std::vector<TrainSample> data;
    for (int i = 0; i < 4; ++i)
        data.push_back(make_sample("p" + std::to_string(i), 16, 2 + i, 3 + i));
    TrainResult res = train(data, cfg);
    CHECK_FALSE(res.params.use_mfg);
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
}
