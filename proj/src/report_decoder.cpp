// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/report_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "m3kg/errors.hpp"
#include "m3kg/text.hpp"

namespace m3kg {

namespace {

const char* kSpecials[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

int Vocab::id_of(const std::string& token) const {
    // Specials occupy 0..3; the rest is sorted, so binary search.
    for (int i = 0; i < 4; ++i)
        if (token == kSpecials[i]) return i;
    const auto lo = id_to_token.begin() + std::min<size_t>(4, id_to_token.size());
    const auto it = std::lower_bound(lo, id_to_token.end(), token);
    if (it != id_to_token.end() && *it == token)
        return static_cast<int>(it - id_to_token.begin());
    return kUnk;
}

Vocab build_vocab(const std::vector<std::string>& reports) {
    std::map<std::string, int> freq;
    for (const std::string& r : reports)
        for (const std::string& tok : split_tokens(r)) ++freq[tok];
    Vocab v;
    for (const char* s : kSpecials) v.id_to_token.push_back(s);
    for (const auto& [tok, n] : freq) {
        (void)n;  // min frequency 1: every seen token enters
        v.id_to_token.push_back(tok);  // std::map iterates alphabetically
    }
    return v;
}

std::vector<int> tokenize(const std::string& text, const Vocab& v) {
    std::vector<int> out;
    for (const std::string& tok : split_tokens(text)) out.push_back(v.id_of(tok));
    return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& v) {
    std::vector<std::string> toks;
    for (int id : ids) {
        if (id < 0 || id >= v.size())
            fail(Err::IndexOutOfRange, "detokenize: id " + std::to_string(id));
        if (id < 4) continue;  // specials are stripped
        toks.push_back(v.id_to_token[id]);
    }
    return join_tokens(toks);
}

void DecoderParams::init(Rng& rng, int vocab_size, int d_dec, int n_heads, int n_blocks,
                         int max_ctx) {
    if (vocab_size < 4 || d_dec < 1 || n_blocks < 0 || max_ctx < 1)
        fail(Err::BadDims, "decoder: bad sizes");
    heads = n_heads;
    E = glorot(rng, vocab_size, d_dec);
    E_pos = glorot(rng, max_ctx, d_dec);
    blocks.assign(n_blocks, DecoderBlockParams{});
    for (DecoderBlockParams& bl : blocks) {
        bl.ln1_g = Mat(1, d_dec);
        bl.ln1_b = Mat(1, d_dec);
        bl.ln2_g = Mat(1, d_dec);
        bl.ln2_b = Mat(1, d_dec);
        for (int c = 0; c < d_dec; ++c) bl.ln1_g(0, c) = bl.ln2_g(0, c) = 1.0;
        bl.attn.init(rng, d_dec, n_heads);
        bl.W1 = glorot(rng, d_dec, 4 * d_dec);
        bl.b1 = Mat(1, 4 * d_dec);
        bl.W2 = glorot(rng, 4 * d_dec, d_dec);
        bl.b2 = Mat(1, d_dec);
    }
    lnf_g = Mat(1, d_dec);
    lnf_b = Mat(1, d_dec);
    for (int c = 0; c < d_dec; ++c) lnf_g(0, c) = 1.0;
}

DecoderBound bind(ad::Tape& t, const DecoderParams& p) {
    DecoderBound b;
    b.heads = p.heads;
    b.E = t.leaf(p.E);
    b.E_pos = t.leaf(p.E_pos);
    for (const DecoderBlockParams& bl : p.blocks) {
        DecoderBlockBound bb;
        bb.ln1_g = t.leaf(bl.ln1_g);
        bb.ln1_b = t.leaf(bl.ln1_b);
        bb.attn = bind(t, bl.attn);
        bb.ln2_g = t.leaf(bl.ln2_g);
        bb.ln2_b = t.leaf(bl.ln2_b);
        bb.W1 = t.leaf(bl.W1);
        bb.b1 = t.leaf(bl.b1);
        bb.W2 = t.leaf(bl.W2);
        bb.b2 = t.leaf(bl.b2);
        b.blocks.push_back(bb);
    }
    b.lnf_g = t.leaf(p.lnf_g);
    b.lnf_b = t.leaf(p.lnf_b);
    return b;
}

ad::NodeId decoder_forward(ad::Tape& t, ad::NodeId F, const std::vector<int>& prompt_ids,
                           const std::vector<int>& target_ids, const DecoderBound& b) {
    const int T = static_cast<int>(target_ids.size());
    if (T < 1) fail(Err::ShapeMismatch, "decoder_forward: need at least one target");
    const Mat& f = t.val(F);
    const Mat& e = t.val(b.E);
    const int d = e.cols;
    if (f.cols != d && f.rows > 0)
        fail(Err::ShapeMismatch, "decoder_forward: prefix width " + std::to_string(f.cols) +
                                     " vs decoder width " + std::to_string(d));
    const int n_f = f.rows;
    const int P = static_cast<int>(prompt_ids.size());

    // Text rows: <bos> then all targets but the last (teacher forcing).
    std::vector<int> text_ids;
    text_ids.push_back(Vocab::kBos);
    for (int i = 0; i + 1 < T; ++i) text_ids.push_back(target_ids[i]);

    std::vector<int> token_rows = prompt_ids;
    token_rows.insert(token_rows.end(), text_ids.begin(), text_ids.end());
    for (int id : token_rows)
        if (id < 0 || id >= e.rows)
            fail(Err::IndexOutOfRange, "decoder_forward: token id " + std::to_string(id));

    const int Lc = n_f + P + T;
    if (Lc > t.val(b.E_pos).rows)
        fail(Err::IndexOutOfRange, "decoder_forward: stack length " + std::to_string(Lc) +
                                       " exceeds position table " +
                                       std::to_string(t.val(b.E_pos).rows));

    ad::NodeId x = ad::gather_rows(t, b.E, token_rows);
    if (n_f > 0) x = ad::concat_rows(t, {F, x});
    x = ad::add(t, x, ad::slice_rows(t, b.E_pos, 0, Lc));

    // Prefix rows are visible to every query; text rows (prompt included)
    // only to queries at or after them.
    ad::Mask mask(static_cast<size_t>(Lc) * Lc, 0);
    for (int i = 0; i < Lc; ++i)
        for (int j = 0; j < Lc; ++j)
            if (j < n_f || j <= i) mask[static_cast<size_t>(i) * Lc + j] = 1;

    for (const DecoderBlockBound& bl : b.blocks) {
        const ad::NodeId h1 = ad::layer_norm_rows(t, x, bl.ln1_g, bl.ln1_b);
        x = ad::add(t, x, mha(t, h1, h1, bl.attn, &mask));
        const ad::NodeId h2 = ad::layer_norm_rows(t, x, bl.ln2_g, bl.ln2_b);
        const ad::NodeId mid =
            ad::relu(t, ad::add_row_broadcast(t, ad::matmul(t, h2, bl.W1), bl.b1));
        x = ad::add(t, x, ad::add_row_broadcast(t, ad::matmul(t, mid, bl.W2), bl.b2));
    }
    const ad::NodeId h = ad::layer_norm_rows(t, x, b.lnf_g, b.lnf_b);
    const ad::NodeId h_text = ad::slice_rows(t, h, n_f + P, Lc);
    return ad::matmul_nt(t, h_text, b.E);  // tied output projection
}

ad::NodeId generation_loss(ad::Tape& t, ad::NodeId logits, const std::vector<int>& target_ids) {
    const Mat& lg = t.val(logits);
    if (static_cast<int>(target_ids.size()) != lg.rows)
        fail(Err::LengthMismatch, "generation_loss: " + std::to_string(target_ids.size()) +
                                      " targets vs " + std::to_string(lg.rows) + " logit rows");
    std::vector<uint8_t> active(target_ids.size());
    for (size_t i = 0; i < target_ids.size(); ++i)
        active[i] = target_ids[i] != Vocab::kPad ? 1 : 0;
    return ad::cross_entropy_mean(t, logits, target_ids, active);
}

namespace {

// Log-softmax of the final text row's logits for the next-token decision.
std::vector<double> next_token_logprobs(const Mat& F, const std::vector<int>& prompt_ids,
                                        const std::vector<int>& emitted, const DecoderParams& p) {
    ad::Tape t;
    const DecoderBound b = bind(t, p);
    std::vector<int> targets = emitted;
    targets.push_back(Vocab::kPad);  // dummy final target; its row is what we read
    const Mat lg = t.val(decoder_forward(t, t.leaf(F), prompt_ids, targets, b));
    const double* row = lg.row(lg.rows - 1);
    double mx = row[0];
    for (int j = 1; j < lg.cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < lg.cols; ++j) z += std::exp(row[j] - mx);
    const double logz = mx + std::log(z);
    std::vector<double> out(lg.cols);
    for (int j = 0; j < lg.cols; ++j) out[j] = row[j] - logz;
    return out;
}

struct Beam {
    std::vector<int> seq;
    double logp = 0.0;
    bool done = false;
};

bool beam_before(const Beam& a, const Beam& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.seq < b.seq;  // lexicographic id order
}

}  // namespace

std::vector<int> generate(const Mat& F, const std::vector<int>& prompt_ids,
                          const DecoderParams& p, GenMode mode, int max_len, int beam_k) {
    if (max_len <= 0) return {};
    if (mode == GenMode::greedy) {
        std::vector<int> out;
        for (int step = 0; step < max_len; ++step) {
            const std::vector<double> lp = next_token_logprobs(F, prompt_ids, out, p);
            int best = 0;
            for (size_t j = 1; j < lp.size(); ++j)
                if (lp[j] > lp[best]) best = static_cast<int>(j);
            out.push_back(best);
            if (best == Vocab::kEos) break;
        }
        return out;
    }
    if (beam_k < 1) fail(Err::BadParams, "generate: beam_k must be >= 1");
    std::vector<Beam> beams{Beam{}};
    for (int step = 0; step < max_len; ++step) {
        std::vector<Beam> cand;
        bool any_live = false;
        for (const Beam& bm : beams) {
            if (bm.done) {
                cand.push_back(bm);
                continue;
            }
            any_live = true;
            const std::vector<double> lp = next_token_logprobs(F, prompt_ids, bm.seq, p);
            for (size_t v = 0; v < lp.size(); ++v) {
                Beam nb = bm;
                nb.seq.push_back(static_cast<int>(v));
                nb.logp += lp[v];
                nb.done = static_cast<int>(v) == Vocab::kEos;
                cand.push_back(std::move(nb));
            }
        }
        if (!any_live) break;
        std::sort(cand.begin(), cand.end(), beam_before);
        if (static_cast<int>(cand.size()) > beam_k) cand.resize(beam_k);
        beams = std::move(cand);
    }
    std::sort(beams.begin(), beams.end(), beam_before);
    return beams.front().seq;
}

} // namespace m3kg
