// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Tiny autoregressive transformer decoder conditioned on a prefix matrix
// and a textual prompt: vocabulary handling, teacher-forced logits and
// loss, and greedy/beam generation. Self-attention runs over the stacked
// rows [prefix | prompt | text]; prefix rows are visible everywhere, text
// rows (prompt included) are causally masked.
#pragma once

#include <string>
#include <vector>

#include "m3kg/attention.hpp"
#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

// Fixed instruction prepended (as token rows) to every decode.
inline constexpr const char* kPromptText =
    "Generate a comprehensive radiology report for this chest X-ray:";

// Dense token ids: four specials, then the corpus vocabulary in
// alphabetical order (case-folded, min frequency 1).
struct Vocab {
    static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
    std::vector<std::string> id_to_token;

    int size() const { return static_cast<int>(id_to_token.size()); }
    int id_of(const std::string& token) const;  // <unk> id for OOV
};

Vocab build_vocab(const std::vector<std::string>& reports);

// Case-folded whitespace split, OOV mapped to <unk>. "" -> [].
std::vector<int> tokenize(const std::string& text, const Vocab& v);

// Joins with single spaces; special ids are dropped. Throws
// IndexOutOfRange for ids outside the vocabulary.
std::string detokenize(const std::vector<int>& ids, const Vocab& v);

struct DecoderBlockParams {
    Mat ln1_g, ln1_b;  // 1 x d_dec, pre-attention norm
    MhaParams attn;
    Mat ln2_g, ln2_b;  // pre-feed-forward norm
    Mat W1, b1;        // d_dec x 4*d_dec, 1 x 4*d_dec
    Mat W2, b2;        // 4*d_dec x d_dec, 1 x d_dec
};

struct DecoderParams {
    Mat E;      // |V| x d_dec token embedding; output projection is E^T (tied)
    Mat E_pos;  // max_ctx x d_dec learned absolute positions over the full stack
    std::vector<DecoderBlockParams> blocks;
    Mat lnf_g, lnf_b;  // final norm
    int heads = 4;
    int max_len = 64;
    void init(Rng& rng, int vocab_size, int d_dec, int n_heads, int n_blocks, int max_ctx);
};

struct DecoderBlockBound {
    ad::NodeId ln1_g = -1, ln1_b = -1;
    MhaBound attn;
    ad::NodeId ln2_g = -1, ln2_b = -1;
    ad::NodeId W1 = -1, b1 = -1, W2 = -1, b2 = -1;
};

struct DecoderBound {
    ad::NodeId E = -1, E_pos = -1;
    std::vector<DecoderBlockBound> blocks;
    ad::NodeId lnf_g = -1, lnf_b = -1;
    int heads = 4;
};

DecoderBound bind(ad::Tape& t, const DecoderParams& p);

// Teacher-forced logits, one row per target position. Row t is produced
// from the prefix, the prompt, <bos>, and targets before t only. F may
// have zero rows (prompt-only conditioning). Throws ShapeMismatch on
// empty targets or width disagreements, IndexOutOfRange when the stack
// outgrows the position table.
ad::NodeId decoder_forward(ad::Tape& t, ad::NodeId F, const std::vector<int>& prompt_ids,
                           const std::vector<int>& target_ids, const DecoderBound& b);

// Mean negative log-softmax at the targets over non-<pad> positions.
// Throws LengthMismatch when sizes differ, EmptyInput when every position
// is padding.
ad::NodeId generation_loss(ad::Tape& t, ad::NodeId logits, const std::vector<int>& target_ids);

enum class GenMode { greedy, beam };

// Emits up to max_len tokens, stopping after <eos>. Greedy breaks ties
// toward the lowest id; beam search keeps beam_k prefixes by total
// log-probability with ties broken by lexicographic id order. beam_k = 1
// reproduces greedy.
std::vector<int> generate(const Mat& F, const std::vector<int>& prompt_ids,
                          const DecoderParams& p, GenMode mode, int max_len, int beam_k = 1);

} // namespace m3kg
