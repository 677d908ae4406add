// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/scale_fusion.hpp"

#include "m3kg/errors.hpp"

namespace m3kg {

void FusionParams::init(Rng& rng, int n_scales, int n_max, int d, int heads) {
    E_scale = glorot(rng, n_scales, d);
    E_pos = glorot(rng, n_max, d);
    attn.init(rng, d, heads);
}

FusionBound bind(ad::Tape& t, const FusionParams& p) {
    FusionBound b;
    b.E_scale = t.leaf(p.E_scale);
    b.E_pos = t.leaf(p.E_pos);
    b.attn = bind(t, p.attn);
    b.residual = p.residual;
    return b;
}

ad::NodeId apply_encodings(ad::Tape& t, ad::NodeId X, int scale_index,
                           const FusionBound& p) {
    using namespace ad;
    const int n = t.val(X).rows;
    if (scale_index < 0 || scale_index >= t.val(p.E_scale).rows)
        fail(Err::BadScaleIndex, "apply_encodings: scale index " +
                                     std::to_string(scale_index) + " out of range");
    if (n > t.val(p.E_pos).rows)
        fail(Err::TooManyNodes, "apply_encodings: " + std::to_string(n) +
                                    " rows exceed E_pos capacity " +
                                    std::to_string(t.val(p.E_pos).rows));
    NodeId scale_row = slice_rows(t, p.E_scale, scale_index, scale_index + 1);
    NodeId with_scale = add_row_broadcast(t, X, scale_row);
    if (n == 0) return with_scale;
    NodeId pos = slice_rows(t, p.E_pos, 0, n);
    return add(t, with_scale, pos);
}

FusedScales fuse(ad::Tape& t, const std::vector<ad::NodeId>& xs, const FusionBound& p,
                 std::vector<Mat>* attn_out) {
    using namespace ad;
    if (xs.empty()) fail(Err::EmptyInput, "fuse: no scales");
    FusedScales out;
    NodeId xcat = xs.size() == 1 ? xs[0] : concat_rows(t, xs);
    NodeId attended = mha(t, xcat, xcat, p.attn, nullptr, attn_out);
    out.concat = p.residual ? add(t, xcat, attended) : attended;
    int offset = 0;
    for (NodeId x : xs) {
        const int n = t.val(x).rows;
        out.offsets.push_back(offset);
        out.per_scale.push_back(slice_rows(t, out.concat, offset, offset + n));
        offset += n;
    }
    return out;
}

ad::NodeId select_final(const FusedScales& fused, int target_scale_index) {
    if (target_scale_index < 0 ||
        target_scale_index >= static_cast<int>(fused.per_scale.size()))
        fail(Err::BadScaleIndex, "select_final: scale index " +
                                     std::to_string(target_scale_index) + " out of range");
    return fused.per_scale[target_scale_index];
}

} // namespace m3kg
