#include "wscos/mfg.hpp"

#include <cmath>

#include "wscos/errors.hpp"

namespace wscos {

namespace {

void validate_grouping(const GroupingParams& p) {
    if (p.H < 1 || p.W < 1 || p.C < 1 || p.N < 1)
        throw ContractViolation("grouping: dims must be positive");
    if (p.C % p.N != 0) throw ContractViolation("grouping: C must be divisible by N");
    const size_t hw = static_cast<size_t>(p.H) * p.W;
    const size_t c = static_cast<size_t>(p.C);
    const size_t n = static_cast<size_t>(p.N);
    if (p.prototypes->shape != std::vector<size_t>{n, c} ||
        p.pos_embed->shape != std::vector<size_t>{hw, c} ||
        p.w_q->shape != std::vector<size_t>{c, c} || p.w_k->shape != std::vector<size_t>{c, c} ||
        p.w_v->shape != std::vector<size_t>{c, c} || p.gru.width() != c ||
        p.proj.size() != n)
        throw ContractViolation("grouping: parameter shapes inconsistent");
    for (const auto& w : p.proj)
        if (w->shape != std::vector<size_t>{c, c / n})
            throw ContractViolation("grouping: projection must map C -> C/N");
}

void require_features(const TensorPtr& f, const GroupingParams& p, const char* where) {
    const size_t hw = static_cast<size_t>(p.H) * p.W;
    if (f->shape != std::vector<size_t>{hw, static_cast<size_t>(p.C)})
        throw ContractViolation(std::string(where) + ": features must be {H*W, C}");
}

}  // namespace

std::vector<TensorPtr> GroupingParams::parameters() const {
    std::vector<TensorPtr> out{prototypes, pos_embed, w_q, w_k, w_v};
    for (const auto& g : gru.parameters()) out.push_back(g);
    for (const auto& w : proj) out.push_back(w);
    return out;
}

std::vector<TensorPtr> MFGParams::parameters() const {
    std::vector<TensorPtr> out = g1.parameters();
    for (const auto& t : g2.parameters()) out.push_back(t);
    out.push_back(gate_w);
    out.push_back(gate_b);
    return out;
}

GroupingParams init_grouping_params(Rng& rng, int H, int W, int C, int N) {
    if (H < 1 || W < 1 || C < 1 || N < 1)
        throw ContractViolation("init_grouping_params: dims must be positive");
    if (C % N != 0) throw ContractViolation("init_grouping_params: C must be divisible by N");
    const size_t hw = static_cast<size_t>(H) * W;
    const size_t c = static_cast<size_t>(C);
    const size_t n = static_cast<size_t>(N);
    const double sd = 0.02;
    GroupingParams p;
    p.H = H;
    p.W = W;
    p.C = C;
    p.N = N;
    p.prototypes = Tensor::randn({n, c}, rng, sd, true);
    p.pos_embed = Tensor::randn({hw, c}, rng, sd, true);
    p.w_q = Tensor::randn({c, c}, rng, sd, true);
    p.w_k = Tensor::randn({c, c}, rng, sd, true);
    p.w_v = Tensor::randn({c, c}, rng, sd, true);
    p.gru = GRUWeights::init(c, rng, sd);
    for (size_t i = 0; i < n; ++i) p.proj.push_back(Tensor::randn({c, c / n}, rng, sd, true));
    return p;
}

MFGParams init_mfg_params(Rng& rng, int H, int W, int C, int n1, int n2) {
    if (n1 == n2) throw ContractViolation("init_mfg_params: prototype counts must differ");
    MFGParams p;
    p.g1 = init_grouping_params(rng, H, W, C, n1);
    p.g2 = init_grouping_params(rng, H, W, C, n2);
    p.gate_w = Tensor::randn({2 * static_cast<size_t>(C), 1}, rng, 0.02, true);
    p.gate_b = Tensor::randn({1, 1}, rng, 0.02, true);
    return p;
}

TensorPtr feature_grouping(const TensorPtr& f_rows, const GroupingParams& p, int T,
                           GroupingTrace* trace) {
    validate_grouping(p);
    require_features(f_rows, p, "feature_grouping");
    if (T < 1) throw ContractViolation("feature_grouping: T must be >= 1");

    const size_t hw = static_cast<size_t>(p.H) * p.W;
    TensorPtr f_p = add(f_rows, p.pos_embed);
    TensorPtr k = matmul(f_p, p.w_k);  // {HW, C}
    TensorPtr v = matmul(f_p, p.w_v);  // {HW, C}
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(p.C));

    TensorPtr protos = p.prototypes;  // {N, C}
    for (int t = 0; t < T; ++t) {
        TensorPtr q = matmul(protos, p.w_q);                            // {N, C}
        TensorPtr a = mul_scalar(matmul(k, transpose(q)), inv_sqrt_c);  // {HW, N}
        TensorPtr a_bar = softmax_axis(a, 1);          // each location sums to 1
        TensorPtr d = div_rowvec(a_bar, sum_axis0(a_bar));  // each prototype sums to 1
        TensorPtr u = matmul(transpose(d), v);         // {N, C} integral per prototype
        protos = gru_cell(u, protos, p.gru);
        if (trace) {
            trace->a_bar.push_back(a_bar);
            trace->d.push_back(d);
        }
    }

    std::vector<TensorPtr> parts;
    for (int n = 0; n < p.N; ++n) {
        TensorPtr grid = broadcast_row(take_row(protos, static_cast<size_t>(n)), hw);
        parts.push_back(matmul(add(grid, p.pos_embed), p.proj[static_cast<size_t>(n)]));
    }
    return concat_cols(parts);  // {HW, C}
}

TensorPtr mfg_forward(const TensorPtr& f_rows, const MFGParams& p, int T) {
    if (p.g1.H != p.g2.H || p.g1.W != p.g2.W || p.g1.C != p.g2.C)
        throw ContractViolation("mfg_forward: grouping scales disagree on dims");
    if (p.g1.N == p.g2.N) throw ContractViolation("mfg_forward: prototype counts must differ");
    const size_t c2 = 2 * static_cast<size_t>(p.g1.C);
    if (p.gate_w->shape != std::vector<size_t>{c2, 1} ||
        p.gate_b->shape != std::vector<size_t>{1, 1})
        throw ContractViolation("mfg_forward: gate shapes inconsistent");

    TensorPtr g1 = feature_grouping(f_rows, p.g1, T);
    TensorPtr g2 = feature_grouping(add(f_rows, g1), p.g2, T);
    TensorPtr gate_in = add_rowvec(matmul(concat_cols({g1, g2}), p.gate_w), p.gate_b);
    TensorPtr alpha = sigmoid(gate_in);  // {HW, 1}
    TensorPtr blended = add(mul_colvec(g1, alpha), mul_colvec(g2, rsub_scalar(1.0, alpha)));
    return add(f_rows, blended);
}

}  // namespace wscos
