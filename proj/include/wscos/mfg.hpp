#pragma once

#include <vector>

#include "wscos/rng.hpp"
#include "wscos/tensor.hpp"

namespace wscos {

// One grouping scale: N prototypes competing for the H*W feature rows.
struct GroupingParams {
    int H = 0, W = 0, C = 0, N = 0;
    TensorPtr prototypes;          // {N, C}
    TensorPtr pos_embed;           // {H*W, C}, added to the features
    TensorPtr w_q, w_k, w_v;       // {C, C}
    GRUWeights gru;                // width C
    std::vector<TensorPtr> proj;   // N matrices {C, C/N}; concat restores C

    std::vector<TensorPtr> parameters() const;
};

struct MFGParams {
    GroupingParams g1, g2;  // prototype counts N1 != N2
    TensorPtr gate_w;       // {2C, 1}
    TensorPtr gate_b;       // {1, 1}

    std::vector<TensorPtr> parameters() const;
};

// Per-iteration attention state, for inspecting the normalizations.
struct GroupingTrace {
    std::vector<TensorPtr> a_bar;  // {H*W, N}, rows sum to 1
    std::vector<TensorPtr> d;      // {H*W, N}, columns sum to 1
};

GroupingParams init_grouping_params(Rng& rng, int H, int W, int C, int N);
MFGParams init_mfg_params(Rng& rng, int H, int W, int C, int n1 = 2, int n2 = 4);

// f_rows is the feature map as {H*W, C} (see chw_to_rows). Runs T rounds of
// attention + GRU prototype refinement, then broadcasts each prototype back
// onto the grid, projects to C/N channels, and concatenates. Dims preserved.
TensorPtr feature_grouping(const TensorPtr& f_rows, const GroupingParams& p, int T = 3,
                           GroupingTrace* trace = nullptr);

// G1 = group(F) at N1, G2 = group(F + G1) at N2, blended per location by a
// learned sigmoid gate: F + a*G1 + (1-a)*G2.
TensorPtr mfg_forward(const TensorPtr& f_rows, const MFGParams& p, int T = 3);

}  // namespace wscos
