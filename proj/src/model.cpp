#include "wscos/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wscos/errors.hpp"

namespace wscos {

namespace {

constexpr double kClip = 1e-7;
constexpr std::uint32_t kCheckpointMagic = 0x4b435357;  // "WSCK"
constexpr std::uint32_t kCheckpointVersion = 1;

// He-style Gaussian: keeps tanh stages from shrinking the signal the way a
// flat 0.02 init would.
ConvLayer init_conv(Rng& rng, size_t out_ch, size_t in_ch) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(in_ch) * 9.0));
    ConvLayer l;
    l.w = Tensor::randn({out_ch, in_ch, 3, 3}, rng, sd, true);
    l.b = Tensor::full({out_ch}, 0.0, true);
    return l;
}

TensorPtr image_tensor(const Grid& g) {
    return Tensor::from_data({1, static_cast<size_t>(g.rows), static_cast<size_t>(g.cols)}, g.v);
}

TensorPtr clip01(const TensorPtr& p) { return clamp_t(p, kClip, 1.0 - kClip); }

// -(t*log p + (1-t)*log(1-p)) elementwise, p clipped
TensorPtr ce_map(const TensorPtr& pred, const TensorPtr& target) {
    TensorPtr p = clip01(pred);
    TensorPtr pos = mul(target, log_t(p));
    TensorPtr neg = mul(rsub_scalar(1.0, target), log_t(rsub_scalar(1.0, p)));
    return mul_scalar(add(pos, neg), -1.0);
}

void require_pred(const TensorPtr& pred, const char* where) {
    if (pred->shape.size() != 3 || pred->shape[0] != 1)
        throw ContractViolation(std::string(where) + ": pred must be {1,H,W}");
}

double decayed_lr(const TrainConfig& cfg, int epoch) {
    return cfg.learning_rate * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_interval);
}

struct Adam {
    std::vector<std::vector<double>> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int t = 0;

    explicit Adam(const std::vector<TensorPtr>& params) {
        for (const auto& p : params) {
            m.emplace_back(p->data.size(), 0.0);
            v.emplace_back(p->data.size(), 0.0);
        }
    }

    void step(const std::vector<TensorPtr>& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            for (size_t j = 0; j < p.data.size(); ++j) {
                const double g = p.grad[j];
                m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
                v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
                p.data[j] -= lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
            }
        }
    }
};

}  // namespace

std::vector<TensorPtr> SegmenterParams::parameters() const {
    std::vector<TensorPtr> out{enc1.w, enc1.b, enc2.w, enc2.b, enc3.w, enc3.b};
    if (use_mfg)
        for (const auto& t : mfg.parameters()) out.push_back(t);
    for (const auto& l : {dec1, dec2, dec3}) {
        out.push_back(l.w);
        out.push_back(l.b);
    }
    return out;
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.lr_decay_interval < 1 || cfg.mfg_T < 1)
        throw ContractViolation("TrainConfig: counts must be positive");
    if (!(cfg.learning_rate > 0.0) || !(cfg.lr_decay_factor > 0.0 && cfg.lr_decay_factor <= 1.0))
        throw ContractViolation("TrainConfig: bad learning-rate settings");
    if (cfg.n1 == cfg.n2 || 32 % cfg.n1 != 0 || 32 % cfg.n2 != 0)
        throw ContractViolation("TrainConfig: prototype counts must differ and divide 32");
}

SegmenterParams init_segmenter(Rng& rng, int H, int W, int mfg_T, int n1, int n2, bool use_mfg) {
    if (H < 8 || W < 8 || H % 8 != 0 || W % 8 != 0)
        throw ContractViolation("init_segmenter: dims must be divisible by 8");
    SegmenterParams p;
    p.H = H;
    p.W = W;
    p.mfg_T = mfg_T;
    p.enc1 = init_conv(rng, 16, 1);
    p.enc2 = init_conv(rng, 32, 16);
    p.enc3 = init_conv(rng, 32, 32);
    p.mfg = init_mfg_params(rng, H / 8, W / 8, 32, n1, n2);
    p.use_mfg = use_mfg;
    p.dec1 = init_conv(rng, 16, 32);
    p.dec2 = init_conv(rng, 8, 16);
    p.dec3 = init_conv(rng, 1, 8);
    return p;
}

TensorPtr forward(const SegmenterParams& p, const Grid& image) {
    if (image.rows != p.H || image.cols != p.W)
        throw ContractViolation("forward: image dims do not match the segmenter");
    TensorPtr x = image_tensor(image);
    TensorPtr e1 = tanh_t(conv2d(x, p.enc1.w, p.enc1.b, 2, 1));
    TensorPtr e2 = tanh_t(conv2d(e1, p.enc2.w, p.enc2.b, 2, 1));
    TensorPtr e3 = tanh_t(conv2d(e2, p.enc3.w, p.enc3.b, 2, 1));
    TensorPtr f = e3;
    if (p.use_mfg) {
        TensorPtr rows = chw_to_rows(e3);
        TensorPtr grouped = mfg_forward(rows, p.mfg, p.mfg_T);
        f = rows_to_chw(grouped, static_cast<size_t>(p.H / 8), static_cast<size_t>(p.W / 8));
    }
    TensorPtr d1 = tanh_t(conv2d(upsample2x(f), p.dec1.w, p.dec1.b, 1, 1));
    TensorPtr d2 = tanh_t(conv2d(upsample2x(d1), p.dec2.w, p.dec2.b, 1, 1));
    TensorPtr logits = conv2d(upsample2x(d2), p.dec3.w, p.dec3.b, 1, 1);
    return sigmoid(logits);
}

ProbMask predict(const SegmenterParams& p, const Grid& image) {
    NoGradGuard guard;
    TensorPtr out = forward(p, image);
    Grid g(image.rows, image.cols);
    g.v = out->data;
    return g;
}

TensorPtr partial_ce(const TensorPtr& pred, const SparseAnnotation& ann) {
    require_pred(pred, "partial_ce");
    const int h = static_cast<int>(pred->shape[1]);
    const int w = static_cast<int>(pred->shape[2]);
    std::vector<double> mask(static_cast<size_t>(h) * w, 0.0), target(mask.size(), 0.0);
    auto put = [&](int r, int c, bool fg) {
        if (r < 0 || r >= h || c < 0 || c >= w)
            throw ContractViolation("partial_ce: annotation outside the image");
        mask[static_cast<size_t>(r) * w + c] = 1.0;
        target[static_cast<size_t>(r) * w + c] = fg ? 1.0 : 0.0;
    };
    if (ann.has_scribble()) {
        if (ann.scribble.rows != h || ann.scribble.cols != w)
            throw ContractViolation("partial_ce: scribble dims mismatch");
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (ann.scribble.at(r, c) != ScribbleLabel::unknown)
                    put(r, c, ann.scribble.at(r, c) == ScribbleLabel::foreground);
    }
    for (const auto& pt : ann.points) put(pt.row, pt.col, pt.foreground);
    double count = 0;
    for (double m : mask) count += m;
    if (count == 0.0) throw ContractViolation("partial_ce: no labeled pixels");

    const std::vector<size_t> shape = pred->shape;
    TensorPtr t = Tensor::from_data(shape, target);
    TensorPtr m = Tensor::from_data(shape, mask);
    return mul_scalar(sum_all(mul(ce_map(pred, t), m)), 1.0 / count);
}

TensorPtr dense_ce(const TensorPtr& pred, const Grid& target) {
    require_pred(pred, "dense_ce");
    if (static_cast<size_t>(target.rows) != pred->shape[1] ||
        static_cast<size_t>(target.cols) != pred->shape[2])
        throw ContractViolation("dense_ce: dims mismatch");
    TensorPtr t = Tensor::from_data(pred->shape, target.v);
    return mean_all(ce_map(pred, t));
}

TensorPtr soft_iou_loss(const TensorPtr& pred, const TensorPtr& target) {
    if (pred->shape != target->shape) throw ContractViolation("soft_iou_loss: dims mismatch");
    TensorPtr inter = sum_all(mul(pred, target));
    TensorPtr uni = sub(add(sum_all(pred), sum_all(target)), inter);
    return rsub_scalar(1.0, div(add_scalar(inter, 1.0), add_scalar(uni, 1.0)));
}

TensorPtr soft_iou_loss(const TensorPtr& pred, const Grid& target) {
    require_pred(pred, "soft_iou_loss");
    return soft_iou_loss(pred, Tensor::from_data(pred->shape, target.v));
}

TensorPtr total_loss(const TensorPtr& pred, const SparseAnnotation& ann,
                     const PseudoLabel& label) {
    TensorPtr pce = partial_ce(pred, ann);
    if (!label.kept) return pce;
    return add(add(pce, dense_ce(pred, label.weighted_mask)),
               soft_iou_loss(pred, label.weighted_mask));
}

TrainResult train(const std::vector<TrainSample>& data, const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (data.empty()) throw ContractViolation("train: empty dataset");
    const int H = data[0].image.rows, W = data[0].image.cols;
    for (const auto& s : data)
        if (s.image.rows != H || s.image.cols != W)
            throw ContractViolation("train: images must share dims");

    Rng rng(cfg.seed);
    TrainResult res;
    res.params = init_segmenter(rng, H, W, cfg.mfg_T, cfg.n1, cfg.n2, cfg.use_mfg);
    std::vector<TensorPtr> params = res.params.parameters();
    Adam adam(params);

    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        const double lr = decayed_lr(cfg, epoch);
        double epoch_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            TensorPtr batch;
            for (size_t i = start; i < end; ++i) {
                const TrainSample& s = data[order[i]];
                TensorPtr loss = total_loss(forward(res.params, s.image), s.ann, s.label);
                batch = batch ? add(batch, loss) : loss;
            }
            batch = mul_scalar(batch, 1.0 / static_cast<double>(end - start));
            if (!std::isfinite(batch->data[0]))
                throw TrainingError("training diverged at epoch " + std::to_string(epoch));
            backward(batch);
            adam.step(params, lr);
            epoch_sum += batch->data[0] * static_cast<double>(end - start);
        }
        res.epoch_loss.push_back(epoch_sum / static_cast<double>(data.size()));
    }
    return res;
}

void save_checkpoint(const std::filesystem::path& path, const SegmenterParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_checkpoint: cannot open " + path.string());
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put32(kCheckpointMagic);
    put32(kCheckpointVersion);
    nlohmann::json arch;
    arch["h"] = p.H;
    arch["w"] = p.W;
    arch["n1"] = p.mfg.g1.N;
    arch["n2"] = p.mfg.g2.N;
    arch["mfg_T"] = p.mfg_T;
    arch["use_mfg"] = p.use_mfg;
    auto& shapes = arch["shapes"];
    for (const auto& t : p.parameters()) {
        shapes.push_back(t->shape);
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    }
    if (!out) throw FormatError("save_checkpoint: write failed for " + path.string());
    std::ofstream js(path.parent_path() / "arch.json");
    js << arch.dump(2) << "\n";
    if (!js) throw FormatError("save_checkpoint: cannot write arch.json");
}

SegmenterParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream js(path.parent_path() / "arch.json");
    if (!js) throw NotFoundError("load_checkpoint: missing arch.json beside " + path.string());
    nlohmann::json arch;
    try {
        js >> arch;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: bad arch.json: ") + e.what());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("load_checkpoint: missing " + path.string());
    std::uint32_t magic = 0, version = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || magic != kCheckpointMagic) throw FormatError("load_checkpoint: bad magic");
    if (version != kCheckpointVersion) throw FormatError("load_checkpoint: unknown version");

    SegmenterParams p;
    try {
        Rng rng(0);
        p = init_segmenter(rng, arch.at("h").get<int>(), arch.at("w").get<int>(),
                           arch.at("mfg_T").get<int>(), arch.at("n1").get<int>(),
                           arch.at("n2").get<int>(), arch.at("use_mfg").get<bool>());
        const auto& shapes = arch.at("shapes");
        auto params = p.parameters();
        if (shapes.size() != params.size())
            throw FormatError("load_checkpoint: arch.json shape count mismatch");
        for (size_t i = 0; i < params.size(); ++i) {
            if (shapes[i].get<std::vector<size_t>>() != params[i]->shape)
                throw FormatError("load_checkpoint: shape mismatch at blob " + std::to_string(i));
            in.read(reinterpret_cast<char*>(params[i]->data.data()),
                    static_cast<std::streamsize>(params[i]->data.size() * sizeof(double)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: bad arch.json: ") + e.what());
    } catch (const ContractViolation& e) {
        throw FormatError(std::string("load_checkpoint: invalid architecture: ") + e.what());
    }
    if (!in) throw FormatError("load_checkpoint: truncated parameter blob");
    char extra = 0;
    if (in.read(&extra, 1)) throw FormatError("load_checkpoint: trailing bytes");
    return p;
}

}  // namespace wscos
