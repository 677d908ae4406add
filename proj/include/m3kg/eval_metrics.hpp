// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Report-generation metrics: corpus BLEU-1..4 with brevity penalty,
// sentence ROUGE-L and METEOR, corpus CIDEr-D, and clinical-efficacy
// precision/recall/F1 through a rule-based 14-label extractor with
// negation handling.
#pragma once

#include <array>
#include <string>
#include <vector>

namespace m3kg {

// Corpus-level BLEU-n, n in 1..4: clipped n-gram counts summed across the
// corpus per order, geometric mean of the order precisions, brevity
// penalty exp(1 - r/c) when the hypothesis corpus is shorter than the
// reference corpus. Any zero order precision gives 0. One reference per
// hypothesis. Throws LengthMismatch and EmptyCorpus.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int n);

// Sentence ROUGE-L F (beta = 1) over case-folded tokens; 0 when either
// side is empty.
double rouge_l(const std::string& hyp, const std::string& ref);

// Exact-match METEOR: alignment maximizes matches, then minimizes chunks
// (ties to the leftmost alignment); F_mean = PR / (0.9 P + 0.1 R),
// penalty = 0.5 (chunks/matches)^3; 0 when nothing matches.
double meteor(const std::string& hyp, const std::string& ref);

// Exposed alignment search for oracle testing: returns (matches, chunks)
// of the optimal alignment between token lists.
struct MeteorAlignment {
    int matches = 0;
    int chunks = 0;
};
MeteorAlignment meteor_alignment(const std::vector<std::string>& hyp_toks,
                                 const std::vector<std::string>& ref_toks);

// Corpus CIDEr-D over orders 1..4: clipped tf-idf cosine per order with a
// Gaussian length penalty (sigma = 6), averaged over each hypothesis's
// reference set, meaned over orders, scaled by 10. Document frequencies
// come from the given reference sets. Throws LengthMismatch and
// EmptyCorpus.
double cider_d(const std::vector<std::string>& hypotheses,
               const std::vector<std::vector<std::string>>& reference_sets);

enum class LabelState : uint8_t { absent = 0, positive = 1, negative = 2 };

constexpr int kNumLabels = 14;
using LabelVector = std::array<LabelState, kNumLabels>;

// Fixed label order used everywhere labels are indexed.
extern const std::array<const char*, kNumLabels> kLabelNames;

// Rule-based extraction: per-label keyword phrases matched on case-folded
// tokens, sentence-split on '.'. A match preceded within 5 tokens in the
// same sentence by a negation cue (no, not, without, free of, negative
// for, clear of, resolution of) is negative; otherwise positive; unseen
// labels are absent. "No Finding" is positive exactly when the other 13
// are all absent or negative.
LabelVector extract_labels(const std::string& report);

struct CeScores {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Micro-averaged over all (example, label) cells on the positive class;
// 0 conventions when a denominator is 0. Throws LengthMismatch.
CeScores ce_scores(const std::vector<LabelVector>& hyp_labels,
                   const std::vector<LabelVector>& ref_labels);

// Plug-in hook for externally produced labels: JSON Lines, each line an
// array of 14 states given as "positive" / "negative" / "absent" or the
// integers 1 / 2 / 0. Malformed lines raise ParseError with the 1-based
// line number.
std::vector<LabelVector> load_label_file(const std::string& path);

} // namespace m3kg
