// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Adds learnable scale and positional encodings to per-scale node features,
// fuses all scales with self-attention over the concatenated node axis, and
// slices back per scale.
#pragma once

#include <vector>

#include "m3kg/attention.hpp"
#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

struct FusionParams {
    Mat E_scale;   // S x D, one learned row per scale
    Mat E_pos;     // N_max x D, one learned row per within-scale position
    MhaParams attn;
    bool residual = true;
    void init(Rng& rng, int n_scales, int n_max, int d, int heads);
};

struct FusionBound {
    ad::NodeId E_scale = -1, E_pos = -1;
    MhaBound attn;
    bool residual = true;
};

FusionBound bind(ad::Tape& t, const FusionParams& p);

// Row p of the result = X[p] + E_scale[scale_index] + E_pos[p].
ad::NodeId apply_encodings(ad::Tape& t, ad::NodeId X, int scale_index,
                           const FusionBound& p);

struct FusedScales {
    ad::NodeId concat = -1;              // X'' over all scales
    std::vector<ad::NodeId> per_scale;   // slices partitioning concat
    std::vector<int> offsets;            // exclusive prefix sums
};

// Self-attention over the row-concatenation of the per-scale matrices; with
// residual on, X'' = X' + Attention(X'). attn_out (optional) receives the
// per-head attention weights for row-stochasticity checks.
FusedScales fuse(ad::Tape& t, const std::vector<ad::NodeId>& xs, const FusionBound& p,
                 std::vector<Mat>* attn_out = nullptr);

ad::NodeId select_final(const FusedScales& fused, int target_scale_index);

} // namespace m3kg
