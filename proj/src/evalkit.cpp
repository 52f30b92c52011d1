#include "wscos/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "wscos/errors.hpp"

namespace wscos {

double mae(const ProbMask& pred, const Grid& gt) {
    require_dims_match(pred, gt, "mae");
    double sum = 0;
    for (size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred.v[i] - gt.v[i]);
    return sum / static_cast<double>(pred.size());
}

double adaptive_fbeta(const ProbMask& pred, const Grid& gt) {
    require_dims_match(pred, gt, "adaptive_fbeta");
    double fg = 0;
    for (double v : gt.v) {
        if (v != 0.0 && v != 1.0)
            throw ContractViolation("adaptive_fbeta: gt must be binary");
        fg += v;
    }
    if (fg == 0.0) throw ContractViolation("adaptive_fbeta: gt has no foreground");

    double mean = 0;
    for (double v : pred.v) mean += v;
    mean /= static_cast<double>(pred.size());
    const double thresh = std::min(1.0, 2.0 * mean);

    double tp = 0, positives = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred.v[i] > thresh) {
            ++positives;
            tp += gt.v[i];
        }
    if (tp == 0.0) return 0.0;
    const double p = tp / positives;
    const double r = tp / fg;
    const double b2 = 0.3;
    return (1.0 + b2) * p * r / (b2 * p + r);
}

double iou_score(const ProbMask& pred, const Grid& gt, double threshold) {
    require_dims_match(pred, gt, "iou_score");
    double inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred.v[i] > threshold;
        const bool b = gt.v[i] > threshold;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0.0 ? 1.0 : inter / uni;
}

MetricReport evaluate(const std::vector<EvalCase>& cases) {
    if (cases.empty()) throw ContractViolation("evaluate: no cases");
    MetricReport report;
    for (const auto& c : cases) {
        MetricTriple t;
        t.mae = mae(c.pred, c.gt);
        t.f_beta = adaptive_fbeta(c.pred, c.gt);
        t.iou = iou_score(c.pred, c.gt);
        report.aggregate.mae += t.mae;
        report.aggregate.f_beta += t.f_beta;
        report.aggregate.iou += t.iou;
        report.per_image.emplace_back(c.id, t);
    }
    const double n = static_cast<double>(cases.size());
    report.aggregate.mae /= n;
    report.aggregate.f_beta /= n;
    report.aggregate.iou /= n;
    return report;
}

void write_metrics_json(const std::filesystem::path& path, const MetricReport& report) {
    nlohmann::json j;
    j["aggregate"] = {{"mae", report.aggregate.mae},
                      {"f_beta", report.aggregate.f_beta},
                      {"iou", report.aggregate.iou}};
    j["per_image"] = nlohmann::json::array();
    for (const auto& [id, t] : report.per_image)
        j["per_image"].push_back(
            {{"id", id}, {"mae", t.mae}, {"f_beta", t.f_beta}, {"iou", t.iou}});
    std::ofstream f(path);
    f << j.dump(2) << "\n";
    if (!f) throw FormatError("write_metrics_json: cannot write " + path.string());
}

std::string metrics_table(const MetricReport& report) {
    std::string out = "id            mae     f_beta  iou\n";
    char line[80];
    for (const auto& [id, t] : report.per_image) {
        std::snprintf(line, sizeof line, "%-12s  %.4f  %.4f  %.4f\n", id.c_str(), t.mae,
                      t.f_beta, t.iou);
        out += line;
    }
    std::snprintf(line, sizeof line, "%-12s  %.4f  %.4f  %.4f\n", "mean",
                  report.aggregate.mae, report.aggregate.f_beta, report.aggregate.iou);
    out += line;
    return out;
}

}  // namespace wscos
