// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/vision_path.hpp"

#include <algorithm>
#include <cmath>

#include "m3kg/errors.hpp"

namespace m3kg {

void PatchEncoderParams::init(Rng& rng, int patch_size, int d) {
    if (patch_size < 1 || d < 1) fail(Err::BadDims, "patch encoder: patch and d must be positive");
    patch = patch_size;
    W_patch = glorot(rng, patch * patch, d);
    b = Mat(1, d);
}

Mat patchify(const Mat& pixels, int patch) {
    if (patch < 1) fail(Err::BadDims, "patchify: patch must be positive");
    if (pixels.rows == 0 || pixels.cols == 0) fail(Err::BadDims, "patchify: empty image");
    if (pixels.rows % patch != 0 || pixels.cols % patch != 0)
        fail(Err::BadDims, "patchify: image " + std::to_string(pixels.rows) + "x" +
                               std::to_string(pixels.cols) + " not divisible by patch " +
                               std::to_string(patch));
    const int br = pixels.rows / patch;
    const int bc = pixels.cols / patch;
    Mat out(br * bc, patch * patch);
    for (int pr = 0; pr < br; ++pr)
        for (int pc = 0; pc < bc; ++pc) {
            const int p = pr * bc + pc;
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    out(p, r * patch + c) = pixels(pr * patch + r, pc * patch + c);
        }
    return out;
}

ad::NodeId encode_image(ad::Tape& t, const Mat& pixels, ad::NodeId W_patch,
                        ad::NodeId b, int patch) {
    const ad::NodeId flat = t.push(patchify(pixels, patch), nullptr);
    return ad::add_row_broadcast(t, ad::matmul(t, flat, W_patch), b);
}

void QFormerParams::init(Rng& rng, int n_queries, int d, int heads) {
    if (n_queries < 1) fail(Err::BadDims, "qformer: need at least one query");
    queries = glorot(rng, n_queries, d);
    attn.init(rng, d, heads);
}

ad::NodeId qformer(ad::Tape& t, ad::NodeId F_v, ad::NodeId queries,
                   const MhaBound& attn, std::vector<Mat>* attn_out) {
    if (t.val(F_v).rows == 0) fail(Err::EmptyInput, "qformer: no patch features");
    const ad::NodeId read = mha(t, queries, F_v, attn, nullptr, attn_out);
    return ad::add(t, queries, read);
}

Mat patch_activation(const Mat& pixel_map, int patch) {
    const Mat blocks = patchify(pixel_map, patch);
    const int br = pixel_map.rows / patch;
    const int bc = pixel_map.cols / patch;
    Mat scores(br, bc);
    for (int p = 0; p < blocks.rows; ++p) {
        double s = 0.0;
        for (int c = 0; c < blocks.cols; ++c) s += blocks(p, c);
        scores.data[p] = s / blocks.cols;
    }
    return scores;
}

VisionToken extract_vision_token(const Mat& M, const Mat& F_v_grid, double tau,
                                 int label_index, const std::string& source_id) {
    if (!(tau > 0.0 && tau <= 1.0)) fail(Err::BadParams, "vision token: tau must be in (0, 1]");
    const int n = M.rows * M.cols;
    if (n != F_v_grid.rows)
        fail(Err::ShapeMismatch, "vision token: " + std::to_string(n) + " activation entries vs " +
                                     std::to_string(F_v_grid.rows) + " patch features");
    if (n == 0) fail(Err::EmptyInput, "vision token: empty activation map");
    double mx = 0.0;
    for (double v : M.data) {
        if (v < 0.0) fail(Err::BadParams, "vision token: negative activation");
        mx = std::max(mx, v);
    }
    if (mx == 0.0) fail(Err::EmptyActivation, "vision token: activation map is all zero");
    VisionToken tok;
    tok.source_id = source_id;
    tok.label_index = label_index;
    tok.feature.assign(F_v_grid.cols, 0.0);
    int selected = 0;
    for (int p = 0; p < n; ++p) {
        if (M.data[p] / mx >= tau) {
            for (int c = 0; c < F_v_grid.cols; ++c) tok.feature[c] += F_v_grid(p, c);
            ++selected;
        }
    }
    // The maximal patch has normalized score 1 >= tau, so selected >= 1.
    for (double& v : tok.feature) v /= selected;
    return tok;
}

VisionMemory build_memory(const KnowledgeGraph& g, int n_visual) {
    if (n_visual < 1) fail(Err::BadConfig, "vision memory: n_visual must be positive");
    const int n = std::min<int>(n_visual, static_cast<int>(g.vision_tokens.size()));
    VisionMemory mem;
    mem.K_V = Mat(n, g.d_vision);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < g.d_vision; ++c) mem.K_V(i, c) = g.vision_tokens[i].feature[c];
    return mem;
}

ad::NodeId retrieve(ad::Tape& t, ad::NodeId query, ad::NodeId memory,
                    const MhaBound& attn, std::vector<Mat>* attn_out) {
    if (t.val(memory).rows == 0) fail(Err::EmptyMemory, "retrieve: vision memory is empty");
    return mha(t, query, memory, attn, nullptr, attn_out);
}

} // namespace m3kg
