// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/attention.hpp"

#include <cmath>

#include "m3kg/errors.hpp"

namespace m3kg {

Mat glorot(Rng& rng, int d_in, int d_out) {
    Mat m(d_in, d_out);
    const double s = std::sqrt(6.0 / (d_in + d_out));
    rng.fill_uniform(m, -s, s);
    return m;
}

void MhaParams::init(Rng& rng, int d, int n_heads) {
    heads = n_heads;
    W_Q = glorot(rng, d, d);
    W_K = glorot(rng, d, d);
    W_V = glorot(rng, d, d);
    W_O = glorot(rng, d, d);
}

MhaBound bind(ad::Tape& t, const MhaParams& p) {
    MhaBound b;
    b.heads = p.heads;
    b.W_Q = t.leaf(p.W_Q);
    b.W_K = t.leaf(p.W_K);
    b.W_V = t.leaf(p.W_V);
    b.W_O = t.leaf(p.W_O);
    return b;
}

ad::NodeId mha(ad::Tape& t, ad::NodeId query, ad::NodeId keys, const MhaBound& p,
               const ad::Mask* mask, std::vector<Mat>* attn_out) {
    using namespace ad;
    const int d = t.val(query).cols;
    if (t.val(keys).cols != d) fail(Err::ShapeMismatch, "mha: query/key width mismatch");
    if (t.val(p.W_Q).rows != d) fail(Err::ShapeMismatch, "mha: projection width mismatch");
    if (p.heads < 1 || d % p.heads != 0)
        fail(Err::HeadDivisibility,
             "mha: width " + std::to_string(d) + " not divisible by " +
                 std::to_string(p.heads) + " heads");
    const int dh = d / p.heads;

    NodeId Q = matmul(t, query, p.W_Q);
    NodeId K = matmul(t, keys, p.W_K);
    NodeId V = matmul(t, keys, p.W_V);

    std::vector<NodeId> head_outs;
    for (int h = 0; h < p.heads; ++h) {
        NodeId Qh = slice_cols(t, Q, h * dh, (h + 1) * dh);
        NodeId Kh = slice_cols(t, K, h * dh, (h + 1) * dh);
        NodeId Vh = slice_cols(t, V, h * dh, (h + 1) * dh);
        NodeId scores = scale(t, matmul_nt(t, Qh, Kh), 1.0 / std::sqrt(double(dh)));
        NodeId A = softmax_rows(t, scores, mask);
        if (attn_out) attn_out->push_back(t.val(A));
        head_outs.push_back(matmul(t, A, Vh));
    }
    NodeId cat = p.heads == 1 ? head_outs[0] : concat_cols(t, head_outs);
    return matmul(t, cat, p.W_O);
}

} // namespace m3kg
