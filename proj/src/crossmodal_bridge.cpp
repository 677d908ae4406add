// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/crossmodal_bridge.hpp"

#include <string>

#include "m3kg/errors.hpp"

namespace m3kg {

void BridgeParams::init(Rng& rng, int d, int d_dec, int heads) {
    if (d < 1 || d_dec < 1) fail(Err::BadDims, "bridge: d and d_dec must be positive");
    kg2v.init(rng, d, heads);
    v2kg.init(rng, d, heads);
    proj_v = glorot(rng, d, d_dec);
    proj_kv = glorot(rng, d, d_dec);
    proj_kg2v = glorot(rng, d, d_dec);
    proj_v2kg = glorot(rng, d, d_dec);
}

BridgeBound bind(ad::Tape& t, const BridgeParams& p) {
    BridgeBound b;
    b.kg2v = bind(t, p.kg2v);
    b.v2kg = bind(t, p.v2kg);
    b.proj_v = t.leaf(p.proj_v);
    if (p.tie_projections) {
        b.proj_kv = b.proj_v;
        b.proj_kg2v = b.proj_v;
        b.proj_v2kg = b.proj_v;
    } else {
        b.proj_kv = t.leaf(p.proj_kv);
        b.proj_kg2v = t.leaf(p.proj_kg2v);
        b.proj_v2kg = t.leaf(p.proj_v2kg);
    }
    return b;
}

ad::NodeId kg2v(ad::Tape& t, ad::NodeId F_v, ad::NodeId X_final, const MhaBound& attn,
                std::vector<Mat>* attn_out) {
    if (t.val(X_final).rows == 0) fail(Err::EmptyGraph, "kg2v: no graph nodes");
    if (t.val(F_v).rows == 0) fail(Err::EmptyInput, "kg2v: no patch features");
    return mha(t, F_v, X_final, attn, nullptr, attn_out);
}

ad::NodeId v2kg(ad::Tape& t, ad::NodeId X_final, ad::NodeId F_v, const MhaBound& attn,
                std::vector<Mat>* attn_out) {
    if (t.val(X_final).rows == 0) fail(Err::EmptyGraph, "v2kg: no graph nodes");
    if (t.val(F_v).rows == 0) fail(Err::EmptyInput, "v2kg: no patch features");
    return mha(t, X_final, F_v, attn, nullptr, attn_out);
}

Prefix assemble_prefix(ad::Tape& t, ad::NodeId F_v, ad::NodeId F_kv,
                       ad::NodeId F_kg2v, ad::NodeId F_v2kg, const BridgeBound& b) {
    const ad::NodeId streams[4] = {F_v, F_kv, F_kg2v, F_v2kg};
    const ad::NodeId projs[4] = {b.proj_v, b.proj_kv, b.proj_kg2v, b.proj_v2kg};
    static const char* names[4] = {"v", "kv", "kg2v", "v2kg"};

    Prefix out;
    std::vector<ad::NodeId> parts;
    int row = 0;
    int d_dec = -1;
    for (int s = 0; s < 4; ++s) {
        out.spans.begin[s] = row;
        if (streams[s] < 0) continue;  // omitted stream: zero-length span
        const Mat& x = t.val(streams[s]);
        if (x.rows == 0) continue;
        const Mat& w = t.val(projs[s]);
        if (x.cols != w.rows)
            fail(Err::ShapeMismatch, std::string("assemble_prefix: stream ") + names[s] + " width " +
                                         std::to_string(x.cols) + " vs projection rows " +
                                         std::to_string(w.rows));
        if (d_dec < 0) d_dec = w.cols;
        if (w.cols != d_dec)
            fail(Err::ShapeMismatch, "assemble_prefix: projection widths disagree");
        parts.push_back(ad::matmul(t, streams[s], projs[s]));
        out.spans.len[s] = x.rows;
        row += x.rows;
    }
    if (parts.empty()) fail(Err::EmptyInput, "assemble_prefix: every stream is empty or omitted");
    out.F = parts.size() == 1 ? parts[0] : ad::concat_rows(t, parts);
    out.n_f = row;
    return out;
}

} // namespace m3kg
