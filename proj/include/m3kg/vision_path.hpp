// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Image-side processing: non-overlapping patch encoding, a single-block
// query transformer that compresses the patch grid into a fixed set of
// learned query slots, activation-map-driven vision-token extraction, and
// cross-attention retrieval over a memory of stored vision tokens.
#pragma once

#include <string>
#include <vector>

#include "m3kg/attention.hpp"
#include "m3kg/kg_store.hpp"
#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

// Linear patch embedder. An H x W image is cut into non-overlapping
// patch x patch blocks in row-major block order; each block is flattened
// row-major and projected: row p of the output = flat_p . W_patch + b.
struct PatchEncoderParams {
    int patch = 8;
    Mat W_patch;  // patch^2 x d
    Mat b;        // 1 x d
    void init(Rng& rng, int patch_size, int d);
};

// Rearranges pixels into the (H/patch * W/patch) x patch^2 flattened-block
// matrix. Throws BadDims if the image is empty or either side is not a
// multiple of patch.
Mat patchify(const Mat& pixels, int patch);

// Differentiable patch encoding: patchify(pixels) . W_patch + b, with the
// flattened-block matrix entering the tape as a constant leaf.
ad::NodeId encode_image(ad::Tape& t, const Mat& pixels, ad::NodeId W_patch,
                        ad::NodeId b, int patch);

// Learned query slots plus one cross-attention block. Output has one row
// per query; the attention result is added back onto the queries
// (residual on the query side).
struct QFormerParams {
    Mat queries;  // n_queries x d
    MhaParams attn;
    void init(Rng& rng, int n_queries, int d, int heads);
};

// Q_out = queries + MHA(query = queries, keys/values = F_v). Throws
// EmptyInput when F_v has no rows.
ad::NodeId qformer(ad::Tape& t, ad::NodeId F_v, ad::NodeId queries,
                   const MhaBound& attn, std::vector<Mat>* attn_out = nullptr);

// Mean-pools a pixel-space map into per-patch scores; same block layout as
// patchify. Throws BadDims on size mismatch.
Mat patch_activation(const Mat& pixel_map, int patch);

// Selects the patches whose normalized activation M / max(M) reaches tau
// and emits a single token whose feature is the mean of the selected rows
// of F_v_grid. M is read in row-major order and must supply one score per
// F_v_grid row; all scores must be >= 0 and tau must lie in (0, 1].
// Throws EmptyActivation when max(M) == 0.
VisionToken extract_vision_token(const Mat& M, const Mat& F_v_grid, double tau,
                                 int label_index, const std::string& source_id);

// Fixed bank of stored vision-token features used as keys and values
// during retrieval.
struct VisionMemory {
    Mat K_V;  // n x d_vision
};

// Takes the first n_visual vision tokens of the graph in insertion order
// (fewer if the graph holds fewer). n_visual must be positive.
VisionMemory build_memory(const KnowledgeGraph& g, int n_visual);

// Cross-attention readout: MHA(query, keys = values = memory). Output rows
// align with query rows. Throws EmptyMemory when the memory has no rows.
ad::NodeId retrieve(ad::Tape& t, ad::NodeId query, ad::NodeId memory,
                    const MhaBound& attn, std::vector<Mat>* attn_out = nullptr);

} // namespace m3kg
