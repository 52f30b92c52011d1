#include "wscos/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "wscos/augment.hpp"
#include "wscos/blob.hpp"
#include "wscos/errors.hpp"
#include "wscos/pgm.hpp"

namespace wscos {

namespace {

using nlohmann::json;

Grid box3(const Grid& g) {
    Grid out(g.rows, g.cols);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            double sum = 0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= g.rows || cc < 0 || cc >= g.cols) continue;
                    sum += g.at(rr, cc);
                    ++n;
                }
            out.at(r, c) = sum / n;
        }
    return out;
}

Grid gaussian_field(Rng& rng, int h, int w) {
    Grid g(h, w);
    for (double& v : g.v) v = rng.gaussian();
    return g;
}

// A disk of the target area whose radius is wobbled by a smoothed noise
// field: organic camouflage-like outlines with a controllable footprint.
Grid noisy_disk(Rng& rng, int h, int w, double area_frac) {
    const double radius = std::sqrt(area_frac * h * w / M_PI);
    const int margin = static_cast<int>(std::ceil(radius)) + 2;
    if (2 * margin >= h || 2 * margin >= w) return Grid(h, w);
    const int cr = rng.uniform_int(margin, h - 1 - margin);
    const int cc = rng.uniform_int(margin, w - 1 - margin);

    Grid field = gaussian_field(rng, h, w);
    for (int pass = 0; pass < 3; ++pass) field = box3(field);
    double var = 0;
    for (double v : field.v) var += v * v;
    const double sd = std::sqrt(var / field.size()) + 1e-12;

    Grid mask(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dist = std::hypot(r - cr, c - cc);
            mask.at(r, c) = 1.0 - dist / radius + 0.25 * field.at(r, c) / sd > 0.0 ? 1.0 : 0.0;
        }

    // wobble can pinch off satellites; keep only the component at the center
    std::vector<int> labels;
    label_components(mask, labels);
    const int keep = labels[static_cast<size_t>(cr) * w + cc];
    Grid out(h, w);
    if (keep == 0) return out;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = labels[i] == keep ? 1.0 : 0.0;
    return out;
}

bool touches_border(const Grid& blob) {
    for (int c = 0; c < blob.cols; ++c)
        if (blob.at(0, c) != 0.0 || blob.at(blob.rows - 1, c) != 0.0) return true;
    for (int r = 0; r < blob.rows; ++r)
        if (blob.at(r, 0) != 0.0 || blob.at(r, blob.cols - 1) != 0.0) return true;
    return false;
}

bool overlaps(const Grid& a, const Grid& b) {
    for (size_t i = 0; i < a.size(); ++i)
        if (a.v[i] != 0.0 && b.v[i] != 0.0) return true;
    return false;
}

json point_json(const LabeledPoint& p) {
    return {{"row", p.row}, {"col", p.col}, {"label", p.foreground ? "fg" : "bg"}};
}

LabeledPoint point_from_json(const json& j) {
    LabeledPoint p;
    p.row = j.at("row").get<int>();
    p.col = j.at("col").get<int>();
    const std::string label = j.at("label").get<std::string>();
    if (label != "fg" && label != "bg") throw FormatError("annotation label must be fg or bg");
    p.foreground = label == "fg";
    return p;
}

// scribble pgm bytes: 0 unknown, 255 foreground, 128 background
Grid scribble_to_grid(const ScribbleGrid& s) {
    Grid g(s.rows, s.cols);
    for (size_t i = 0; i < s.v.size(); ++i)
        g.v[i] = s.v[i] == ScribbleLabel::foreground ? 1.0
               : s.v[i] == ScribbleLabel::background ? 128.0 / 255.0
                                                     : 0.0;
    return g;
}

ScribbleGrid grid_to_scribble(const Grid& g) {
    ScribbleGrid s(g.rows, g.cols);
    for (size_t i = 0; i < g.v.size(); ++i) {
        const int byte = static_cast<int>(std::lround(g.v[i] * 255.0));
        if (byte == 255)
            s.v[i] = ScribbleLabel::foreground;
        else if (byte == 128)
            s.v[i] = ScribbleLabel::background;
        else if (byte != 0)
            throw FormatError("scribble file holds a value other than 0/128/255");
    }
    return s;
}

std::vector<size_t> region_indices(const Grid& gt, bool foreground) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < gt.size(); ++i)
        if ((gt.v[i] != 0.0) == foreground) idx.push_back(i);
    return idx;
}

}  // namespace

void validate_scene_spec(const SceneSpec& spec) {
    if (spec.height < 16 || spec.width < 16 || spec.height % 8 != 0 || spec.width % 8 != 0)
        throw ContractViolation("SceneSpec: dims must be >= 16 and divisible by 8");
    if (spec.n_objects < 1 || spec.n_objects > 3)
        throw ContractViolation("SceneSpec: n_objects must be 1..3");
    if (!(spec.contrast >= 0.0 && spec.contrast <= 0.5))
        throw ContractViolation("SceneSpec: contrast must be in [0, 0.5]");
}

Sample generate_sample(const SceneSpec& spec, Rng& rng) {
    validate_scene_spec(spec);
    const int hh = spec.height / 2, ww = spec.width / 2;
    const double half_px = static_cast<double>(hh) * ww;

    // per-object size shrinks with the object count so three blobs plus
    // separation can always fit; a stuck layout restarts the whole scene
    const double lo = spec.n_objects == 2 ? 0.055 : 0.04;
    const double hi = spec.n_objects == 1 ? 0.11 : spec.n_objects == 2 ? 0.10 : 0.06;
    Grid gt_half(hh, ww);
    Grid tiny_half(hh, ww);
    const auto merge_tiny = [](Grid& dst, const Grid& src) {
        for (size_t i = 0; i < dst.size(); ++i)
            if (src.v[i] != 0.0) dst.v[i] = 1.0;
    };
    bool scene_done = false;
    for (int restart = 0; restart < 20 && !scene_done; ++restart) {
        gt_half = Grid(hh, ww);
        scene_done = true;
        for (int k = 0; k < spec.n_objects && scene_done; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
                const double target = rng.uniform_range(lo, hi);
                Grid blob = noisy_disk(rng, hh, ww, target);
                double area = 0;
                for (double v : blob.v) area += v;
                if (area < 0.03 * half_px || area > 0.20 * half_px) continue;
                if (touches_border(blob)) continue;
                if (overlaps(dilate(blob, 1), gt_half)) continue;
                for (size_t i = 0; i < gt_half.size(); ++i)
                    if (blob.v[i] != 0.0) gt_half.v[i] = 1.0;
                placed = true;
            }
            scene_done = placed;
        }
        // satellites: one small disk (13 px) and two tiny disks (9 px) at half
        // resolution — fixed-size hard cases every scene carries alongside the
        // textured blobs. Tiny satellites are conspicuous (extra intensity
        // shift below); they fail in the segmenter for want of pixels, not
        // contrast.
        tiny_half = Grid(hh, ww);
        for (int k = 0; k < 3 && scene_done; ++k) {
            const double rad2 = k == 0 ? 4.0 : 2.25;
            const int reach = k == 0 ? 2 : 1;
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                const int r0 = rng.uniform_int(reach + 1, hh - 2 - reach);
                const int c0 = rng.uniform_int(reach + 1, ww - 2 - reach);
                Grid blob(hh, ww);
                for (int r = r0 - reach; r <= r0 + reach; ++r)
                    for (int c = c0 - reach; c <= c0 + reach; ++c)
                        if ((r - r0) * (r - r0) + (c - c0) * (c - c0) <= rad2)
                            blob.at(r, c) = 1.0;
                if (overlaps(dilate(blob, 3), gt_half)) continue;
                for (size_t i = 0; i < gt_half.size(); ++i)
                    if (blob.v[i] != 0.0) gt_half.v[i] = 1.0;
                if (k > 0) merge_tiny(tiny_half, blob);
                placed = true;
            }
            scene_done = placed;
        }
    }
    if (!scene_done)
        throw GenerationError("generate_sample: could not place " +
                              std::to_string(spec.n_objects) + " objects in " +
                              std::to_string(spec.height) + "x" + std::to_string(spec.width));

    Sample s;
    s.gt = apply_grid(gt_half, {Flip::none, 0, 2.0}, Interp::nearest);
    const Grid tiny_full = apply_grid(tiny_half, {Flip::none, 0, 2.0}, Interp::nearest);

    Rng tex(spec.texture_seed);
    Grid fine = gaussian_field(tex, spec.height, spec.width);
    Grid coarse = box3(gaussian_field(tex, spec.height, spec.width));
    Grid img(spec.height, spec.width);
    const double gap = 0.55 * spec.contrast;
    const double tiny_gap = 0.30 * spec.contrast;  // tiny satellites stand out
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = 0.35 + gap * s.gt.v[i] + tiny_gap * tiny_full.v[i] +
                         0.08 * fine.v[i] + 0.12 * coarse.v[i];
        img.v[i] = std::clamp(v, 0.0, 1.0);
    }
    s.image = quantize_u8(img);
    return s;
}

SparseAnnotation sample_point_annotation(const Grid& gt, Rng& rng) {
    const auto fg = region_indices(gt, true);
    const auto bg = region_indices(gt, false);
    if (fg.empty() || bg.empty())
        throw ContractViolation("sample_point_annotation: gt must have both regions");
    SparseAnnotation ann;
    for (const bool is_fg : {true, false}) {
        const auto& pool = is_fg ? fg : bg;
        const size_t i = pool[rng.uniform_index(pool.size())];
        ann.points.push_back({static_cast<int>(i) / gt.cols, static_cast<int>(i) % gt.cols, is_fg});
    }
    return ann;
}

SparseAnnotation sample_scribble(const Grid& gt, Rng& rng, int length) {
    if (length < 1) throw ContractViolation("sample_scribble: length must be positive");
    SparseAnnotation ann;
    ann.scribble = ScribbleGrid(gt.rows, gt.cols);
    for (const bool is_fg : {true, false}) {
        const auto pool = region_indices(gt, is_fg);
        if (static_cast<int>(pool.size()) < length)
            throw ContractViolation("sample_scribble: region smaller than the walk");
        bool done = false;
        for (int attempt = 0; attempt < 100 && !done; ++attempt) {
            std::vector<size_t> path{pool[rng.uniform_index(pool.size())]};
            std::vector<char> visited(gt.size(), 0);
            visited[path[0]] = 1;
            while (static_cast<int>(path.size()) < length) {
                const int r = static_cast<int>(path.back()) / gt.cols;
                const int c = static_cast<int>(path.back()) % gt.cols;
                size_t options[4];
                int n_opt = 0;
                const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const int rr = r + dr[d], cc = c + dc[d];
                    if (rr < 0 || rr >= gt.rows || cc < 0 || cc >= gt.cols) continue;
                    const size_t i = static_cast<size_t>(rr) * gt.cols + cc;
                    if (visited[i] || (gt.v[i] != 0.0) != is_fg) continue;
                    options[n_opt++] = i;
                }
                if (n_opt == 0) break;  // dead end; retry from scratch
                const size_t next = options[rng.uniform_index(static_cast<std::uint64_t>(n_opt))];
                visited[next] = 1;
                path.push_back(next);
            }
            if (static_cast<int>(path.size()) == length) {
                for (size_t i : path)
                    ann.scribble.v[i] =
                        is_fg ? ScribbleLabel::foreground : ScribbleLabel::background;
                done = true;
            }
        }
        if (!done)
            throw ContractViolation("sample_scribble: no self-avoiding walk of length " +
                                    std::to_string(length) + " fits the region");
    }
    return ann;
}

void validate_gen_config(const GenConfig& cfg) {
    SceneSpec probe;
    probe.height = cfg.height;
    probe.width = cfg.width;
    probe.n_objects = cfg.min_objects;
    probe.contrast = cfg.contrast;
    validate_scene_spec(probe);
    probe.n_objects = cfg.max_objects;
    validate_scene_spec(probe);
    if (cfg.min_objects > cfg.max_objects)
        throw ContractViolation("GenConfig: min_objects > max_objects");
    if (cfg.count < 1) throw ContractViolation("GenConfig: count must be positive");
    if (cfg.annotation != "points" && cfg.annotation != "scribble")
        throw ContractViolation("GenConfig: annotation must be 'points' or 'scribble'");
    if (cfg.scribble_length < 1) throw ContractViolation("GenConfig: bad scribble_length");
    if (cfg.id_prefix.empty()) throw ContractViolation("GenConfig: empty id_prefix");
}

std::vector<DatasetSample> generate_dataset(const GenConfig& cfg) {
    validate_gen_config(cfg);
    std::vector<DatasetSample> out;
    char buf[16];
    for (int i = 0; i < cfg.count; ++i) {
        Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(i)));
        SceneSpec spec;
        spec.height = cfg.height;
        spec.width = cfg.width;
        spec.n_objects = cfg.min_objects + static_cast<int>(rng.uniform_index(
                                               static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
        spec.contrast = cfg.contrast;
        spec.texture_seed = rng.split(1).next_u64();
        DatasetSample s;
        std::snprintf(buf, sizeof buf, "%04d", i);
        s.id = cfg.id_prefix + buf;
        Sample gen = generate_sample(spec, rng);
        s.image = std::move(gen.image);
        s.gt = std::move(gen.gt);
        Rng ann_rng = rng.split(2);
        s.ann = cfg.annotation == "points" ? sample_point_annotation(s.gt, ann_rng)
                                           : sample_scribble(s.gt, ann_rng, cfg.scribble_length);
        out.push_back(std::move(s));
    }
    return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetSample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "gt");
    fs::create_directories(dir / "ann");
    json manifest;
    manifest["images"] = json::array();
    for (const auto& s : samples) {
        write_pgm(dir / "images" / (s.id + ".pgm"), s.image);
        write_pgm(dir / "gt" / (s.id + ".pgm"), s.gt);
        json ann;
        ann["points"] = json::array();
        for (const auto& p : s.ann.points) ann["points"].push_back(point_json(p));
        if (s.ann.has_scribble()) {
            const std::string name = s.id + "_scribble.pgm";
            write_pgm(dir / "ann" / name, scribble_to_grid(s.ann.scribble));
            ann["scribble"] = name;
        }
        std::ofstream f(dir / "ann" / (s.id + ".json"));
        f << ann.dump(2) << "\n";
        if (!f) throw FormatError("write_dataset: cannot write annotation for " + s.id);
        manifest["images"].push_back({{"id", s.id},
                                      {"rows", s.image.rows},
                                      {"cols", s.image.cols}});
    }
    std::ofstream f(dir / "manifest.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw FormatError("write_dataset: cannot write manifest");
}

std::vector<DatasetSample> read_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw NotFoundError("read_dataset: missing manifest.json in " + dir.string());
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(std::string("read_dataset: bad manifest.json: ") + e.what());
    }
    std::vector<DatasetSample> out;
    try {
        for (const auto& entry : manifest.at("images")) {
            DatasetSample s;
            s.id = entry.at("id").get<std::string>();
            const fs::path img = dir / "images" / (s.id + ".pgm");
            const fs::path gt = dir / "gt" / (s.id + ".pgm");
            const fs::path ann = dir / "ann" / (s.id + ".json");
            for (const auto& p : {img, gt, ann})
                if (!fs::exists(p))
                    throw NotFoundError("read_dataset: missing " + p.filename().string() +
                                        " for sample " + s.id);
            s.image = read_pgm(img);
            s.gt = read_pgm(gt);
            for (double v : s.gt.v)
                if (v != 0.0 && v != 1.0)
                    throw FormatError("read_dataset: gt not binary for sample " + s.id);
            std::ifstream af(ann);
            json aj;
            af >> aj;
            for (const auto& pj : aj.at("points")) s.ann.points.push_back(point_from_json(pj));
            if (aj.contains("scribble")) {
                const fs::path sp = dir / "ann" / aj.at("scribble").get<std::string>();
                if (!fs::exists(sp))
                    throw NotFoundError("read_dataset: missing scribble for sample " + s.id);
                s.ann.scribble = grid_to_scribble(read_pgm(sp));
            }
            out.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("read_dataset: bad annotation or manifest: ") + e.what());
    }
    return out;
}

}  // namespace wscos
