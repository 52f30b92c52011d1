#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wscos/evalkit.hpp"
#include "wscos/rng.hpp"

using namespace wscos;
namespace fs = std::filesystem;

namespace {

Grid random_pred(Rng& rng, int dim = 8) {
    Grid g(dim, dim);
    for (double& v : g.v) v = rng.uniform();
    return g;
}

Grid random_gt(Rng& rng, int dim = 8) {
    Grid g(dim, dim);
    bool any = false;
    for (double& v : g.v) {
        v = rng.uniform() < 0.3 ? 1.0 : 0.0;
        any |= v == 1.0;
    }
    if (!any) g.v[0] = 1.0;
    return g;
}

// scalar-loop oracles, written separately from the library code paths
double mae_oracle(const Grid& p, const Grid& g) {
    double s = 0;
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) s += std::fabs(p.at(r, c) - g.at(r, c));
    return s / (p.rows * p.cols);
}

double fbeta_oracle(const Grid& p, const Grid& g) {
    double mean = 0;
    for (double v : p.v) mean += v;
    mean /= p.size();
    const double th = std::min(1.0, 2.0 * mean);
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        const bool pos = p.v[i] > th, real = g.v[i] == 1.0;
        tp += pos && real;
        fp += pos && !real;
        fn += !pos && real;
    }
    if (tp == 0) return 0.0;
    const double prec = double(tp) / (tp + fp), rec = double(tp) / (tp + fn);
    return 1.3 * prec * rec / (0.3 * prec + rec);
}

double iou_oracle(const Grid& p, const Grid& g) {
    int inter = 0, uni = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        const bool a = p.v[i] > 0.5, b = g.v[i] > 0.5;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : double(inter) / uni;
}

}  // namespace

TEST_CASE("mae: pinned values and invariances") {
    Rng rng(2);
    Grid gt = random_gt(rng);
    CHECK(mae(gt, gt) == 0.0);
    CHECK(mae(Grid(8, 8, 0.5), gt) == 0.5);
    CHECK(mae(Grid(8, 8, 0.5), Grid(8, 8, 0.0)) == 0.5);

    for (int i = 0; i < 100; ++i) {
        Grid p = random_pred(rng), g = random_gt(rng);
        CHECK(mae(p, g) == doctest::Approx(mae_oracle(p, g)).epsilon(1e-12));
        Grid pc = p, gc = g;
        for (double& v : pc.v) v = 1.0 - v;
        for (double& v : gc.v) v = 1.0 - v;
        CHECK(mae(pc, gc) == doctest::Approx(mae(p, g)).epsilon(1e-15));
    }
    CHECK_THROWS_AS(mae(Grid(4, 4), Grid(4, 5)), ContractViolation);
}

TEST_CASE("adaptive_fbeta: pinned cases") {
    // minority-foreground identity: threshold 2*mean < 1 keeps all fg positive
    Grid gt(10, 10);
    for (int i = 0; i < 10; ++i) gt.v[i] = 1.0;
    CHECK(adaptive_fbeta(gt, gt) == 1.0);

    CHECK(adaptive_fbeta(Grid(10, 10, 0.0), gt) == 0.0);

    // P=0.5, R=0.8: 8 true positives, 8 false positives, 2 misses
    Grid pred(10, 10);
    for (int i = 0; i < 8; ++i) pred.v[i] = 1.0;       // hits
    for (int i = 10; i < 18; ++i) pred.v[i] = 1.0;     // false alarms
    CHECK(adaptive_fbeta(pred, gt) == doctest::Approx(0.52 / 0.95).epsilon(1e-12));

    // mean >= 0.5 drives the threshold to 1; nothing exceeds it strictly
    Grid hot(10, 10, 1.0);
    CHECK(adaptive_fbeta(hot, gt) == 0.0);

    CHECK_THROWS_AS(adaptive_fbeta(pred, Grid(10, 10, 0.0)), ContractViolation);
    CHECK_THROWS_AS(adaptive_fbeta(pred, Grid(10, 10, 0.4)), ContractViolation);
    CHECK_THROWS_AS(adaptive_fbeta(pred, Grid(10, 9, 0.0)), ContractViolation);
}

TEST_CASE("iou_score: pinned cases") {
    Grid a(8, 8);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) a.at(r, c) = 1.0;
    CHECK(iou_score(a, a) == 1.0);
    CHECK(iou_score(Grid(8, 8), Grid(8, 8)) == 1.0);  // both empty

    Grid b(8, 8);
    for (int r = 4; r < 8; ++r)
        for (int c = 4; c < 8; ++c) b.at(r, c) = 1.0;
    CHECK(iou_score(a, b) == 0.0);

    Grid half(8, 8);  // shifted two columns: overlap 8 of 16+16
    for (int r = 0; r < 4; ++r)
        for (int c = 2; c < 6; ++c) half.at(r, c) = 1.0;
    CHECK(iou_score(a, half) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("metric oracles agree on random cases") {
    Rng rng(77);
    for (int i = 0; i < 300; ++i) {
        Grid p = random_pred(rng), g = random_gt(rng);
        CHECK(mae(p, g) == doctest::Approx(mae_oracle(p, g)).epsilon(1e-12));
        CHECK(adaptive_fbeta(p, g) == doctest::Approx(fbeta_oracle(p, g)).epsilon(1e-12));
        CHECK(iou_score(p, g) == doctest::Approx(iou_oracle(p, g)).epsilon(1e-12));

        // simultaneous permutation invariance
        std::vector<size_t> perm(p.size());
        for (size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        for (size_t k = perm.size(); k > 1; --k)
            std::swap(perm[k - 1], perm[rng.uniform_index(k)]);
        Grid pp(8, 8), gp(8, 8);
        for (size_t k = 0; k < perm.size(); ++k) {
            pp.v[k] = p.v[perm[k]];
            gp.v[k] = g.v[perm[k]];
        }
        CHECK(mae(pp, gp) == doctest::Approx(mae(p, g)).epsilon(1e-12));
        CHECK(adaptive_fbeta(pp, gp) == doctest::Approx(adaptive_fbeta(p, g)).epsilon(1e-12));
        CHECK(iou_score(pp, gp) == doctest::Approx(iou_score(p, g)).epsilon(1e-12));
    }
}

TEST_CASE("evaluate: aggregation, report files, table") {
    Rng rng(5);
    std::vector<EvalCase> cases;
    for (int i = 0; i < 6; ++i)
        cases.push_back({"case" + std::to_string(i), random_pred(rng), random_gt(rng)});
    MetricReport rep = evaluate(cases);
    REQUIRE(rep.per_image.size() == 6);
    double m = 0, f = 0, j = 0;
    for (const auto& [id, t] : rep.per_image) {
        m += t.mae;
        f += t.f_beta;
        j += t.iou;
        CHECK(t.mae >= 0.0);
        CHECK(t.mae <= 1.0);
        CHECK(t.f_beta >= 0.0);
        CHECK(t.f_beta <= 1.0);
        CHECK(t.iou >= 0.0);
        CHECK(t.iou <= 1.0);
    }
    CHECK(rep.aggregate.mae == doctest::Approx(m / 6).epsilon(1e-15));
    CHECK(rep.aggregate.f_beta == doctest::Approx(f / 6).epsilon(1e-15));
    CHECK(rep.aggregate.iou == doctest::Approx(j / 6).epsilon(1e-15));
    CHECK(rep.per_image[0].first == "case0");
    CHECK_THROWS_AS(evaluate({}), ContractViolation);

    const fs::path dir = fs::temp_directory_path() / "wscos_test_eval";
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_metrics_json(dir / "a.json", rep);
    write_metrics_json(dir / "b.json", rep);
    std::ifstream fa(dir / "a.json"), fb(dir / "b.json");
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());  // byte-identical serialization
    CHECK(sa.str().find("\"aggregate\"") != std::string::npos);
    fs::remove_all(dir);

    const std::string table = metrics_table(rep);
    CHECK(table.find("case0") != std::string::npos);
    CHECK(table.find("mean") != std::string::npos);
    CHECK(std::count(table.begin(), table.end(), '\n') == 8);  // header + 6 + mean
}
