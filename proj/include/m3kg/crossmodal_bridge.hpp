// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Bidirectional bridges between graph-node features and patch features
// (cross-attention in both directions), per-stream projection to the
// decoder width, and assembly of the decoder prefix matrix with named row
// spans per stream.
#pragma once

#include <vector>

#include "m3kg/attention.hpp"
#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

struct BridgeParams {
    MhaParams kg2v;             // graph -> vision read (query = patches)
    MhaParams v2kg;             // vision -> graph read (query = nodes)
    Mat proj_v, proj_kv, proj_kg2v, proj_v2kg;  // each d x d_dec
    bool tie_projections = false;
    void init(Rng& rng, int d, int d_dec, int heads);
};

struct BridgeBound {
    MhaBound kg2v, v2kg;
    ad::NodeId proj_v = -1, proj_kv = -1, proj_kg2v = -1, proj_v2kg = -1;
};

// With tie_projections the single proj_v leaf backs all four streams, so
// their gradients accumulate into one matrix.
BridgeBound bind(ad::Tape& t, const BridgeParams& p);

// Reads graph content into the vision rows: query = F_v, keys = values =
// X_final. Output has one row per patch. Throws EmptyGraph when X_final
// has no rows and EmptyInput when F_v has none.
ad::NodeId kg2v(ad::Tape& t, ad::NodeId F_v, ad::NodeId X_final, const MhaBound& attn,
                std::vector<Mat>* attn_out = nullptr);

// Mirror image: query = X_final, keys = values = F_v; one row per node.
ad::NodeId v2kg(ad::Tape& t, ad::NodeId X_final, ad::NodeId F_v, const MhaBound& attn,
                std::vector<Mat>* attn_out = nullptr);

// Row spans of the assembled prefix, in the fixed stream order
// v, kv, kg2v, v2kg. Omitted streams keep a zero-length span.
struct PrefixSpans {
    int begin[4] = {0, 0, 0, 0};
    int len[4] = {0, 0, 0, 0};
};

struct Prefix {
    ad::NodeId F = -1;  // n_f x d_dec
    PrefixSpans spans;
    int n_f = 0;
};

// Projects each stream to the decoder width and stacks them in the order
// (v, kv, kg2v, v2kg). Pass a negative id to omit a stream entirely — the
// rows are dropped, not zero-filled, and its span records length 0.
// Throws EmptyInput when every stream is omitted or empty, ShapeMismatch
// on width disagreements.
Prefix assemble_prefix(ad::Tape& t, ad::NodeId F_v, ad::NodeId F_kv,
                       ad::NodeId F_kg2v, ad::NodeId F_v2kg, const BridgeBound& b);

} // namespace m3kg
