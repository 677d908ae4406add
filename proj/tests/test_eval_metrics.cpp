// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "m3kg/errors.hpp"
#include "m3kg/eval_metrics.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/text.hpp"
#include "metric_oracles.hpp"
#include "testutil.hpp"

using namespace m3kg;
using m3kg::test::temp_path;
using m3kg::test::Tokens;
using m3kg::test::oracle_bleu;
using m3kg::test::oracle_cider;
using m3kg::test::oracle_meteor;
using m3kg::test::oracle_rouge;
using m3kg::test::random_sentence;

namespace {

LabelVector make_labels(std::initializer_list<int> positives) {
    LabelVector v{};
    v.fill(LabelState::absent);
    for (int i : positives) v[i] = LabelState::positive;
    return v;
}

} // namespace

TEST_CASE("bleu hand cases") {
    CHECK(bleu({"the cat sat"}, {"the cat sat"}, 1) == doctest::Approx(1.0));
    // clipped unigram: min(4, 1) matches out of 4, hypothesis longer so BP = 1
    CHECK(bleu({"the the the the"}, {"the cat"}, 1) == doctest::Approx(0.25));
    // perfect precision, short hypothesis: BP = exp(1 - 3/2)
    CHECK(bleu({"the cat"}, {"the cat sat"}, 1) ==
          doctest::Approx(std::exp(1.0 - 1.5)));
    CHECK(bleu({"the cat sat on mat"}, {"the cat sat on mat"}, 4) ==
          doctest::Approx(1.0));
    // a 3-token corpus has no 4-grams: that order's precision is zero
    CHECK(bleu({"the cat sat"}, {"the cat sat"}, 4) == 0.0);
    CHECK(bleu({"dog ran"}, {"the cat"}, 1) == 0.0);
}

TEST_CASE("bleu is corpus-level, not a mean of sentence scores") {
    // Counts pool across examples: one perfect pair and one disjoint pair.
    const std::vector<std::string> hyps = {"the cat", "dog ran"};
    const std::vector<std::string> refs = {"the cat sat", "big mat"};
    // pooled p1 = 2/4; c = 4 < r = 5 so BP = exp(1 - 5/4)
    CHECK(bleu(hyps, refs, 1) == doctest::Approx(0.5 * std::exp(-0.25)));
    const double mean_of_sentences =
        (bleu({hyps[0]}, {refs[0]}, 1) + bleu({hyps[1]}, {refs[1]}, 1)) / 2.0;
    CHECK(bleu(hyps, refs, 1) != doctest::Approx(mean_of_sentences));
}

TEST_CASE("bleu validation") {
    CHECK_THROWS_AS(bleu({"a"}, {"a", "b"}, 1), Error);
    try {
        bleu({"a"}, {"a", "b"}, 1);
    } catch (const Error& e) {
        CHECK(e.code() == Err::LengthMismatch);
    }
    try {
        bleu({}, {}, 1);
    } catch (const Error& e) {
        CHECK(e.code() == Err::EmptyCorpus);
    }
    try {
        bleu({"a"}, {"a"}, 5);
    } catch (const Error& e) {
        CHECK(e.code() == Err::BadParams);
    }
    try {
        bleu({"a"}, {"a"}, 0);
    } catch (const Error& e) {
        CHECK(e.code() == Err::BadParams);
    }
}

TEST_CASE("bleu matches independent oracle on random corpora") {
    Rng rng(901);
    for (int trial = 0; trial < 220; ++trial) {
        const int n_pairs = 1 + rng.below(4);
        std::vector<std::string> hyps, refs;
        for (int i = 0; i < n_pairs; ++i) {
            hyps.push_back(random_sentence(rng, 1, 8));
            refs.push_back(random_sentence(rng, 1, 8));
        }
        const int n = 1 + rng.below(4);
        CHECK(std::abs(bleu(hyps, refs, n) - oracle_bleu(hyps, refs, n)) < 1e-9);
    }
}

TEST_CASE("bleu never decreases as wrong tokens are repaired") {
    // Corrupt references with noise tokens that appear nowhere in any
    // reference, then restore them one position at a time. Each repair
    // replaces a wrong token with the reference token at that position,
    // so matched counts can only grow and lengths are unchanged.
    Rng rng(902);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> refs;
        std::vector<Tokens> hyp_toks;
        std::vector<std::pair<int, int>> noise_slots; // (pair, position)
        for (int i = 0; i < 3; ++i) {
            refs.push_back(random_sentence(rng, 4, 8));
            Tokens t = split_tokens(refs.back());
            const int n_noise = 1 + rng.below(static_cast<int>(t.size()));
            for (int k = 0; k < n_noise; ++k) {
                const int pos = rng.below(static_cast<int>(t.size()));
                if (t[pos].substr(0, 3) == "zzz") continue;
                t[pos] = "zzz" + std::to_string(i) + "_" + std::to_string(pos);
                noise_slots.push_back({i, pos});
            }
            hyp_toks.push_back(t);
        }
        const int n = 1 + rng.below(4);
        auto render = [&] {
            std::vector<std::string> out;
            for (const auto& t : hyp_toks) out.push_back(join_tokens(t));
            return out;
        };
        double prev = bleu(render(), refs, n);
        for (const auto& [pair_idx, pos] : noise_slots) {
            hyp_toks[pair_idx][pos] = split_tokens(refs[pair_idx])[pos];
            const double cur = bleu(render(), refs, n);
            CHECK(cur >= prev - 1e-12);
            prev = cur;
        }
        CHECK(prev == doctest::Approx(1.0)); // fully repaired
    }
}

TEST_CASE("bleu-1 grows as a reference prefix is extended") {
    Rng rng(903);
    for (int trial = 0; trial < 20; ++trial) {
        const Tokens ref = split_tokens(random_sentence(rng, 4, 8));
        double prev = 0.0;
        for (size_t k = 1; k <= ref.size(); ++k) {
            const Tokens prefix(ref.begin(), ref.begin() + k);
            const double cur = bleu({join_tokens(prefix)}, {join_tokens(ref)}, 1);
            CHECK(cur >= prev - 1e-12);
            prev = cur;
        }
        CHECK(prev == doctest::Approx(1.0));
    }
}

TEST_CASE("rouge_l hand cases") {
    CHECK(rouge_l("the cat sat", "the cat sat") == doctest::Approx(1.0));
    CHECK(rouge_l("dog ran", "the cat") == 0.0);
    // LCS("the cat sat on mat", "the cat on the mat") = 4; P = R = 4/5
    CHECK(rouge_l("the cat sat on mat", "the cat on the mat") == doctest::Approx(0.8));
    CHECK(rouge_l("", "the cat") == 0.0);
    CHECK(rouge_l("the cat", "") == 0.0);
    CHECK(rouge_l("The CAT", "the cat") == doctest::Approx(1.0)); // case-folded
}

TEST_CASE("rouge_l is symmetric and matches memoized-recursion oracle") {
    Rng rng(904);
    for (int trial = 0; trial < 220; ++trial) {
        const std::string a = random_sentence(rng, 1, 9);
        const std::string b = random_sentence(rng, 1, 9);
        CHECK(std::abs(rouge_l(a, b) - oracle_rouge(a, b)) < 1e-9);
        CHECK(rouge_l(a, b) == doctest::Approx(rouge_l(b, a)));
    }
}

TEST_CASE("meteor hand cases") {
    CHECK(meteor("dog ran", "the cat") == 0.0);
    // identical 2-token: 1 chunk over 2 matches -> 1 - 0.5 * (1/2)^3
    CHECK(meteor("the cat", "the cat") == doctest::Approx(0.9375));
    // full reorder: 2 chunks over 2 matches -> 1 - 0.5
    CHECK(meteor("cat the", "the cat") == doctest::Approx(0.5));
    CHECK(meteor("", "the cat") == 0.0);
    CHECK(meteor("the cat", "") == 0.0);
}

TEST_CASE("meteor identity corpus value is 1 - 0.5/m^3") {
    Rng rng(905);
    for (int trial = 0; trial < 30; ++trial) {
        const std::string s = random_sentence(rng, 1, 8);
        const double m = static_cast<double>(split_tokens(s).size());
        CHECK(meteor(s, s) == doctest::Approx(1.0 - 0.5 / (m * m * m)));
    }
}

TEST_CASE("meteor alignment maximizes matches then minimizes chunks") {
    // "a b a" vs "a a b": matching both a's plus b forces >= 2 chunks; the
    // 3-match alignment beats any 1-chunk 2-match alternative.
    const MeteorAlignment a = meteor_alignment({"a", "b", "a"}, {"a", "a", "b"});
    CHECK(a.matches == 3);
    CHECK(a.chunks == 2);
    // adjacent pair kept together: "b c" contiguous in both
    const MeteorAlignment b = meteor_alignment({"a", "b", "c"}, {"b", "c", "a"});
    CHECK(b.matches == 3);
    CHECK(b.chunks == 2);
    const MeteorAlignment c = meteor_alignment({"x"}, {"y"});
    CHECK(c.matches == 0);
}

TEST_CASE("meteor matches exhaustive-enumeration oracle") {
    Rng rng(906);
    const std::vector<std::string> small_pool = {"a", "b", "c", "d"};
    for (int trial = 0; trial < 220; ++trial) {
        auto sentence = [&] {
            const int len = 1 + rng.below(6);
            std::string s;
            for (int i = 0; i < len; ++i) {
                if (i) s += ' ';
                s += small_pool[rng.below(static_cast<int>(small_pool.size()))];
            }
            return s;
        };
        const std::string h = sentence(), r = sentence();
        CHECK(std::abs(meteor(h, r) - oracle_meteor(h, r)) < 1e-9);
    }
}

TEST_CASE("cider_d identity corpus with positive idf scores 10") {
    // Each image's vocabulary is unique to it, so every n-gram has
    // df = 1 < N = 3 and idf = ln 3 > 0; cosines are 1 and penalties 1.
    const std::vector<std::string> hyps = {"aa bb cc dd ee", "ff gg hh ii",
                                           "jj kk ll mm nn oo"};
    const std::vector<std::vector<std::string>> refs = {{hyps[0]}, {hyps[1]}, {hyps[2]}};
    CHECK(cider_d(hyps, refs) == doctest::Approx(10.0));
}

TEST_CASE("cider_d degenerate cases") {
    // Single image: every gram appears in the whole corpus, idf = ln 1 = 0,
    // all vectors vanish and the score is 0 even for an exact match.
    CHECK(cider_d({"aa bb cc dd"}, {{"aa bb cc dd"}}) == doctest::Approx(0.0));
    // An empty hypothesis contributes 0 for its image.
    const double s = cider_d({"", "ff gg hh ii"}, {{"aa bb cc dd"}, {"ff gg hh ii"}});
    CHECK(s == doctest::Approx(0.5 * 10.0));
    try {
        cider_d({}, {});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Err::EmptyCorpus);
    }
    try {
        cider_d({"aa"}, {{"aa"}, {"bb"}});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Err::LengthMismatch);
    }
    try {
        cider_d({"aa"}, {{}});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Err::EmptyCorpus);
    }
}

TEST_CASE("cider_d toy corpus matches direct-formula oracle") {
    const std::vector<std::string> hyps = {
        "the cat sat on the mat",
        "a dog ran fast",
        "the dog sat on a mat",
    };
    const std::vector<std::vector<std::string>> refs = {
        {"the cat sat on the mat", "a cat on a mat"},
        {"the dog ran", "a big dog ran away"},
        {"a dog sat on the mat"},
    };
    const double got = cider_d(hyps, refs);
    const double want = oracle_cider(hyps, refs);
    CHECK(std::abs(got - want) < 1e-9);
    CHECK(got > 0.0);
}

TEST_CASE("cider_d matches oracle on random corpora") {
    Rng rng(907);
    for (int trial = 0; trial < 220; ++trial) {
        const int n_img = 2 + rng.below(3);
        std::vector<std::string> hyps;
        std::vector<std::vector<std::string>> refs;
        for (int i = 0; i < n_img; ++i) {
            hyps.push_back(random_sentence(rng, 1, 8));
            std::vector<std::string> rs;
            const int n_ref = 1 + rng.below(2);
            for (int k = 0; k < n_ref; ++k) rs.push_back(random_sentence(rng, 1, 8));
            refs.push_back(rs);
        }
        CHECK(std::abs(cider_d(hyps, refs) - oracle_cider(hyps, refs)) < 1e-9);
    }
}

TEST_CASE("extract_labels spec traces") {
    {
        const LabelVector v = extract_labels("");
        CHECK(v[0] == LabelState::positive);
        for (int i = 1; i < kNumLabels; ++i) CHECK(v[i] == LabelState::absent);
    }
    {
        const LabelVector v = extract_labels("no pleural effusion.");
        CHECK(v[10] == LabelState::negative);
        CHECK(v[0] == LabelState::positive);
    }
    {
        const LabelVector v =
            extract_labels("small bilateral pleural effusions. mild cardiomegaly.");
        CHECK(v[10] == LabelState::positive);
        CHECK(v[2] == LabelState::positive);
        CHECK(v[0] == LabelState::absent);
    }
}

TEST_CASE("extract_labels covers every label and is case-insensitive") {
    const std::vector<std::pair<int, std::string>> probes = {
        {1, "there is an enlarged cardiomediastinum."},
        {2, "mild cardiomegaly is seen in the heart."},
        {3, "a hazy opacity is seen in the lung."},
        {4, "a small nodule is seen in the lung."},
        {5, "mild edema is seen in the lung."},
        {6, "patchy consolidation is seen in the lung."},
        {7, "findings are suggestive of pneumonia."},
        {8, "there is atelectasis at the base."},
        {9, "a small pneumothorax is present."},
        {10, "small effusion is seen in the pleura."},
        {11, "there is pleural thickening."},
        {12, "an old fracture is noted."},
        {13, "a feeding tube is in place."},
    };
    for (const auto& [idx, text] : probes) {
        CAPTURE(text);
        const LabelVector v = extract_labels(text);
        CHECK(v[idx] == LabelState::positive);
        CHECK(v[0] == LabelState::absent);
        std::string upper = text;
        for (char& ch : upper) ch = static_cast<char>(std::toupper(ch));
        CHECK(extract_labels(upper)[idx] == LabelState::positive);
    }
}

TEST_CASE("extract_labels negation cues") {
    const std::vector<std::pair<int, std::string>> negated = {
        {10, "no pleural effusion."},
        {9, "the exam is negative for pneumothorax."},
        {6, "the lungs are free of consolidation."},
        {5, "the lungs are clear of edema."},
        {10, "resolution of the effusion."},
        {12, "without fracture."},
        {8, "atelectasis is not seen."}, // cue after the match: stays positive
    };
    for (size_t k = 0; k + 1 < negated.size(); ++k) {
        CAPTURE(negated[k].second);
        const LabelVector v = extract_labels(negated[k].second);
        CHECK(v[negated[k].first] == LabelState::negative);
        CHECK(v[0] == LabelState::positive);
    }
    CHECK(extract_labels(negated.back().second)[8] == LabelState::positive);
}

TEST_CASE("extract_labels negation window and sentence scope") {
    // cue end to match start: 4 intervening tokens is within the window
    CHECK(extract_labels("no w x y z effusion.")[10] == LabelState::negative);
    // 5 intervening tokens is outside it
    CHECK(extract_labels("no v w x y z effusion.")[10] == LabelState::positive);
    // the cue does not cross a sentence boundary
    CHECK(extract_labels("no change. effusion is seen.")[10] == LabelState::positive);
    // a positive mention elsewhere overrides a negated one
    const LabelVector v = extract_labels("no effusion. there is a small effusion.");
    CHECK(v[10] == LabelState::positive);
    CHECK(v[0] == LabelState::absent);
    // multi-token cue: only its full form negates
    CHECK(extract_labels("negative for effusion.")[10] == LabelState::negative);
    CHECK(extract_labels("negative findings near the effusion.")[10] ==
          LabelState::positive);
}

TEST_CASE("label order matches the fixed catalog") {
    CHECK(std::string(kLabelNames[0]) == "No Finding");
    CHECK(std::string(kLabelNames[2]) == "Cardiomegaly");
    CHECK(std::string(kLabelNames[10]) == "Pleural Effusion");
    CHECK(std::string(kLabelNames[13]) == "Support Devices");
    CHECK(kNumLabels == 14);
}

TEST_CASE("ce_scores hand cases") {
    {
        const std::vector<LabelVector> both = {make_labels({2, 10})};
        const CeScores s = ce_scores(both, both);
        CHECK(s.precision == doctest::Approx(1.0));
        CHECK(s.recall == doctest::Approx(1.0));
        CHECK(s.f1 == doctest::Approx(1.0));
    }
    {
        const std::vector<LabelVector> hyp = {make_labels({})};
        const std::vector<LabelVector> ref = {make_labels({3, 5})};
        const CeScores s = ce_scores(hyp, ref);
        CHECK(s.precision == 0.0);
        CHECK(s.recall == 0.0);
        CHECK(s.f1 == 0.0);
    }
    {
        // TP = 1 (ex0 label 2); FP = 1 (ex1 label 3); FN = 1 (ex1 label 5)
        const std::vector<LabelVector> hyp = {make_labels({2}), make_labels({3})};
        const std::vector<LabelVector> ref = {make_labels({2}), make_labels({5})};
        const CeScores s = ce_scores(hyp, ref);
        CHECK(s.precision == doctest::Approx(0.5));
        CHECK(s.recall == doctest::Approx(0.5));
        CHECK(s.f1 == doctest::Approx(0.5));
    }
    {
        // negative vs positive is a miss, not a hit
        std::vector<LabelVector> hyp = {make_labels({})};
        hyp[0][4] = LabelState::negative;
        const std::vector<LabelVector> ref = {make_labels({4})};
        const CeScores s = ce_scores(hyp, ref);
        CHECK(s.recall == 0.0);
    }
    try {
        ce_scores({make_labels({})}, {});
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Err::LengthMismatch);
    }
}

TEST_CASE("ce_scores micro-averaging pools cells across examples") {
    // ex0: TP=2; ex1: TP=1, FP=2 -> micro P = 3/5, R = 3/3
    const std::vector<LabelVector> hyp = {make_labels({1, 2}), make_labels({3, 4, 5})};
    const std::vector<LabelVector> ref = {make_labels({1, 2}), make_labels({3})};
    const CeScores s = ce_scores(hyp, ref);
    CHECK(s.precision == doctest::Approx(0.6));
    CHECK(s.recall == doctest::Approx(1.0));
    CHECK(s.f1 == doctest::Approx(2 * 0.6 / 1.6));
}

TEST_CASE("extract_labels feeds ce_scores end to end") {
    const std::string gold = "patchy consolidation is seen in the lung. "
                             "findings are suggestive of pneumonia.";
    const std::vector<LabelVector> h = {extract_labels(gold)};
    const std::vector<LabelVector> r = {extract_labels(gold)};
    const CeScores s = ce_scores(h, r);
    CHECK(s.f1 == doctest::Approx(1.0));
    CHECK(h[0][6] == LabelState::positive);
    CHECK(h[0][7] == LabelState::positive);
}

TEST_CASE("label file round trip and validation") {
    const std::string path = temp_path("labels.jsonl");
    {
        std::ofstream out(path);
        out << R"(["positive","absent","negative","absent","absent","absent","absent",)"
            << R"("absent","absent","absent","absent","absent","absent","absent"])"
            << "\n";
        out << "\n"; // blank lines are skipped
        out << "[1,0,2,0,0,0,0,0,0,0,1,0,0,0]\n";
    }
    const std::vector<LabelVector> got = load_label_file(path);
    REQUIRE(got.size() == 2);
    CHECK(got[0][0] == LabelState::positive);
    CHECK(got[0][2] == LabelState::negative);
    CHECK(got[1][0] == LabelState::positive);
    CHECK(got[1][2] == LabelState::negative);
    CHECK(got[1][10] == LabelState::positive);
    std::remove(path.c_str());

    SUBCASE("malformed JSON reports the line number") {
        const std::string bad = temp_path("labels_bad.jsonl");
        {
            std::ofstream out(bad);
            out << "[0,0,0,0,0,0,0,0,0,0,0,0,0,0]\n";
            out << "{not json\n";
        }
        try {
            load_label_file(bad);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == Err::ParseError);
            CHECK(e.line() == 2);
        }
        std::remove(bad.c_str());
    }
    SUBCASE("wrong arity") {
        const std::string bad = temp_path("labels_arity.jsonl");
        {
            std::ofstream out(bad);
            out << "[0,0,0]\n";
        }
        try {
            load_label_file(bad);
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == Err::ParseError);
            CHECK(e.line() == 1);
        }
        std::remove(bad.c_str());
    }
    SUBCASE("unknown state string and out-of-range integer") {
        const std::string bad = temp_path("labels_state.jsonl");
        {
            std::ofstream out(bad);
            out << R"(["maybe","absent","absent","absent","absent","absent","absent",)"
                << R"("absent","absent","absent","absent","absent","absent","absent"])"
                << "\n";
        }
        CHECK_THROWS_AS(load_label_file(bad), Error);
        {
            std::ofstream out(bad);
            out << "[7,0,0,0,0,0,0,0,0,0,0,0,0,0]\n";
        }
        CHECK_THROWS_AS(load_label_file(bad), Error);
        {
            std::ofstream out(bad);
            out << "[[0],0,0,0,0,0,0,0,0,0,0,0,0,0]\n";
        }
        CHECK_THROWS_AS(load_label_file(bad), Error);
        std::remove(bad.c_str());
    }
    SUBCASE("missing file") {
        try {
            load_label_file(temp_path("nope_does_not_exist.jsonl"));
            CHECK(false);
        } catch (const Error& e) {
            CHECK(e.code() == Err::IoError);
        }
    }
}
