#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wscos/grid.hpp"

namespace wscos {

struct MetricTriple {
    double mae = 0.0;
    double f_beta = 0.0;
    double iou = 0.0;
};

struct MetricReport {
    MetricTriple aggregate;  // mean of the per-image triples
    std::vector<std::pair<std::string, MetricTriple>> per_image;
};

// Mean |pred - gt| over all pixels.
double mae(const ProbMask& pred, const Grid& gt);

// Binarize pred at min(1, 2*mean(pred)) (strictly above), then
// F = (1+b2)*P*R / (b2*P + R) with b2 = 0.3; 0 when nothing overlaps.
double adaptive_fbeta(const ProbMask& pred, const Grid& gt);

// Jaccard index of pred > threshold against gt > threshold; 1 when both
// sides are empty.
double iou_score(const ProbMask& pred, const Grid& gt, double threshold = 0.5);

struct EvalCase {
    std::string id;
    ProbMask pred;
    Grid gt;
};

MetricReport evaluate(const std::vector<EvalCase>& cases);

void write_metrics_json(const std::filesystem::path& path, const MetricReport& report);
std::string metrics_table(const MetricReport& report);

}  // namespace wscos
