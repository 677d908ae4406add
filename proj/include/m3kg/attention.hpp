// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-head scaled dot-product attention shared by the fusion, vision,
// bridge, and decoder modules. Forward passes run on the autodiff tape.
#pragma once

#include <vector>

#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

// Uniform(-s, s) with s = sqrt(6 / (d_in + d_out)).
Mat glorot(Rng& rng, int d_in, int d_out);

struct MhaParams {
    int heads = 4;
    Mat W_Q, W_K, W_V, W_O;  // each d x d
    void init(Rng& rng, int d, int n_heads);
};

// Tape-registered parameter ids for one attention block.
struct MhaBound {
    int heads = 4;
    ad::NodeId W_Q = -1, W_K = -1, W_V = -1, W_O = -1;
};

MhaBound bind(ad::Tape& t, const MhaParams& p);

// Concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) W_O with Q = query W_Q and
// K/V = keys W_K / keys W_V. `mask`, if given, is an n_q x n_k row-major
// visibility mask (nonzero = may attend). If attn_out is non-null the
// per-head attention weight matrices are appended to it (test hook for
// row-stochasticity checks).
ad::NodeId mha(ad::Tape& t, ad::NodeId query, ad::NodeId keys, const MhaBound& p,
               const ad::Mask* mask = nullptr, std::vector<Mat>* attn_out = nullptr);

} // namespace m3kg
