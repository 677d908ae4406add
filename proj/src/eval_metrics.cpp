// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "m3kg/errors.hpp"
#include "m3kg/text.hpp"

namespace m3kg {

namespace {

using Tokens = std::vector<std::string>;

// N-grams as joined strings keyed in an ordered map: deterministic
// iteration, and a '\x1f' separator that cannot occur inside a token.
std::map<std::string, int> ngram_counts(const Tokens& toks, int n) {
    std::map<std::string, int> counts;
    if (n < 1 || static_cast<int>(toks.size()) < n) return counts;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key = toks[i];
        for (int k = 1; k < n; ++k) {
            key += '\x1f';
            key += toks[i + k];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int n) {
    if (n < 1 || n > 4) fail(Err::BadParams, "bleu order must be in 1..4");
    if (hypotheses.size() != references.size())
        fail(Err::LengthMismatch, "bleu: " + std::to_string(hypotheses.size()) +
                             " hypotheses vs " + std::to_string(references.size()) +
                             " references");
    if (hypotheses.empty()) fail(Err::EmptyCorpus, "bleu: empty corpus");

    std::vector<long long> matched(n, 0), total(n, 0);
    long long hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const Tokens h = split_tokens(hypotheses[i]);
        const Tokens r = split_tokens(references[i]);
        hyp_len += static_cast<long long>(h.size());
        ref_len += static_cast<long long>(r.size());
        for (int order = 1; order <= n; ++order) {
            const auto hc = ngram_counts(h, order);
            const auto rc = ngram_counts(r, order);
            for (const auto& [gram, count] : hc) {
                total[order - 1] += count;
                const auto it = rc.find(gram);
                if (it != rc.end())
                    matched[order - 1] += std::min(count, it->second);
            }
        }
    }

    double log_prec_sum = 0.0;
    for (int order = 1; order <= n; ++order) {
        if (total[order - 1] == 0 || matched[order - 1] == 0) return 0.0;
        log_prec_sum += std::log(static_cast<double>(matched[order - 1]) /
                                 static_cast<double>(total[order - 1]));
    }
    const double geo_mean = std::exp(log_prec_sum / n);
    double bp = 1.0;
    if (hyp_len < ref_len) {
        if (hyp_len == 0) return 0.0;
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    }
    return bp * geo_mean;
}

double rouge_l(const std::string& hyp, const std::string& ref) {
    const Tokens h = split_tokens(hyp);
    const Tokens r = split_tokens(ref);
    if (h.empty() || r.empty()) return 0.0;
    const size_t m = h.size(), n = r.size();
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            if (h[i - 1] == r[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = prev[n];
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(m);
    const double q = lcs / static_cast<double>(n);
    return 2.0 * p * q / (p + q);
}

namespace {

// Exhaustive alignment search. Hypothesis positions are processed left to
// right; each either matches an unused reference occurrence of the same
// token or stays unmatched. Prunes on an upper bound of achievable
// matches and, at equal matches, on the chunk count (chunks only grow
// along a branch). Trying reference occurrences in ascending order and
// replacing the incumbent only on strict improvement makes the first
// optimum found the leftmost one.
struct AlignSearch {
    const Tokens& hyp;
    const Tokens& ref;
    std::vector<std::vector<int>> candidates; // per hyp pos: ref positions with equal token
    std::vector<char> ref_used;
    // Upper bound helper: how many of hyp positions i.. can still match,
    // ignoring chunk structure. Recomputed cheaply from per-token tallies.
    int best_matches = -1;
    int best_chunks = 0;

    AlignSearch(const Tokens& h, const Tokens& r) : hyp(h), ref(r) {
        std::map<std::string, std::vector<int>> occ;
        for (size_t j = 0; j < ref.size(); ++j) occ[ref[j]].push_back(static_cast<int>(j));
        candidates.resize(hyp.size());
        for (size_t i = 0; i < hyp.size(); ++i) {
            const auto it = occ.find(hyp[i]);
            if (it != occ.end()) candidates[i] = it->second;
        }
        ref_used.assign(ref.size(), 0);
    }

    int remaining_bound(size_t from) const {
        std::map<std::string, int> need;
        for (size_t i = from; i < hyp.size(); ++i)
            if (!candidates[i].empty()) ++need[hyp[i]];
        int bound = 0;
        for (const auto& [tok, cnt] : need) {
            int avail = 0;
            for (size_t j = 0; j < ref.size(); ++j)
                if (!ref_used[j] && ref[j] == tok) ++avail;
            bound += std::min(cnt, avail);
        }
        return bound;
    }

    // last_ref: reference index matched by the immediately preceding hyp
    // position, or -2 when the previous position was unmatched (so the
    // next match always opens a new chunk).
    void dfs(size_t i, int matched, int chunks, int last_ref) {
        if (matched + remaining_bound(i) < best_matches) return;
        if (matched + remaining_bound(i) == best_matches && chunks >= best_chunks &&
            best_matches >= 0)
            return;
        if (i == hyp.size()) {
            if (matched > best_matches ||
                (matched == best_matches && chunks < best_chunks)) {
                best_matches = matched;
                best_chunks = chunks;
            }
            return;
        }
        for (int j : candidates[i]) {
            if (ref_used[j]) continue;
            ref_used[j] = 1;
            const int new_chunks = (last_ref >= 0 && j == last_ref + 1) ? chunks : chunks + 1;
            dfs(i + 1, matched + 1, new_chunks, j);
            ref_used[j] = 0;
        }
        dfs(i + 1, matched, chunks, -2);
    }
};

} // namespace

MeteorAlignment meteor_alignment(const Tokens& hyp_toks, const Tokens& ref_toks) {
    AlignSearch search(hyp_toks, ref_toks);
    search.dfs(0, 0, 0, -2);
    MeteorAlignment out;
    out.matches = std::max(search.best_matches, 0);
    out.chunks = search.best_chunks;
    return out;
}

double meteor(const std::string& hyp, const std::string& ref) {
    const Tokens h = split_tokens(hyp);
    const Tokens r = split_tokens(ref);
    if (h.empty() || r.empty()) return 0.0;
    const MeteorAlignment a = meteor_alignment(h, r);
    if (a.matches == 0) return 0.0;
    const double m = a.matches;
    const double p = m / static_cast<double>(h.size());
    const double q = m / static_cast<double>(r.size());
    const double f_mean = p * q / (0.9 * p + 0.1 * q);
    const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
    return f_mean * (1.0 - penalty);
}

double cider_d(const std::vector<std::string>& hypotheses,
               const std::vector<std::vector<std::string>>& reference_sets) {
    if (hypotheses.size() != reference_sets.size())
        fail(Err::LengthMismatch, "cider_d: " + std::to_string(hypotheses.size()) +
                             " hypotheses vs " + std::to_string(reference_sets.size()) +
                             " reference sets");
    if (hypotheses.empty()) fail(Err::EmptyCorpus, "cider_d: empty corpus");
    for (size_t i = 0; i < reference_sets.size(); ++i)
        if (reference_sets[i].empty())
            fail(Err::EmptyCorpus, "cider_d: reference set " + std::to_string(i) + " is empty");

    constexpr int kMaxOrder = 4;
    constexpr double kSigma = 6.0;
    const double n_images = static_cast<double>(reference_sets.size());

    // Document frequency: number of reference sets containing the gram.
    std::map<std::string, int> df;
    for (const auto& refs : reference_sets) {
        std::map<std::string, char> seen;
        for (const auto& ref : refs) {
            const Tokens toks = split_tokens(ref);
            for (int order = 1; order <= kMaxOrder; ++order)
                for (const auto& [gram, count] : ngram_counts(toks, order))
                    seen[gram] = 1;
        }
        for (const auto& [gram, one] : seen) ++df[gram];
    }
    const auto idf = [&](const std::string& gram) {
        const auto it = df.find(gram);
        const double d = (it == df.end()) ? 1.0 : std::max(1.0, static_cast<double>(it->second));
        return std::log(n_images / d);
    };

    double score_sum = 0.0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const Tokens h = split_tokens(hypotheses[i]);
        double per_ref_sum = 0.0;
        for (const auto& ref : reference_sets[i]) {
            const Tokens r = split_tokens(ref);
            const double delta = static_cast<double>(h.size()) - static_cast<double>(r.size());
            const double penalty = std::exp(-delta * delta / (2.0 * kSigma * kSigma));
            double order_sum = 0.0;
            for (int order = 1; order <= kMaxOrder; ++order) {
                const auto hc = ngram_counts(h, order);
                const auto rc = ngram_counts(r, order);
                double dot = 0.0, h_norm2 = 0.0, r_norm2 = 0.0;
                for (const auto& [gram, count] : hc) {
                    const double w = idf(gram);
                    const double hv = count * w;
                    h_norm2 += hv * hv;
                    const auto it = rc.find(gram);
                    if (it != rc.end())
                        dot += std::min(hv, it->second * w) * (it->second * w);
                }
                for (const auto& [gram, count] : rc) {
                    const double rv = count * idf(gram);
                    r_norm2 += rv * rv;
                }
                if (h_norm2 > 0.0 && r_norm2 > 0.0)
                    order_sum += penalty * dot / (std::sqrt(h_norm2) * std::sqrt(r_norm2));
            }
            per_ref_sum += order_sum / kMaxOrder;
        }
        score_sum += 10.0 * per_ref_sum / static_cast<double>(reference_sets[i].size());
    }
    return score_sum / n_images;
}

const std::array<const char*, kNumLabels> kLabelNames = {
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
};

namespace {

// Keyword phrases per label (index matches kLabelNames); matched as
// consecutive case-folded tokens. "No Finding" (index 0) has none: it is
// derived from the other thirteen.
const std::vector<std::vector<Tokens>>& label_phrases() {
    static const std::vector<std::vector<Tokens>> phrases = [] {
        const std::vector<std::vector<std::string>> raw = {
            /* No Finding */ {},
            /* Enlarged Cardiomediastinum */
            {"enlarged cardiomediastinum", "cardiomediastinal enlargement",
             "widened mediastinum", "mediastinal widening"},
            /* Cardiomegaly */
            {"cardiomegaly", "enlarged heart", "cardiac enlargement"},
            /* Lung Opacity */ {"opacity", "opacities", "opacification"},
            /* Lung Lesion */ {"lesion", "lesions", "nodule", "nodules", "mass"},
            /* Edema */ {"edema"},
            /* Consolidation */ {"consolidation", "consolidations"},
            /* Pneumonia */ {"pneumonia", "infectious process"},
            /* Atelectasis */ {"atelectasis", "atelectatic"},
            /* Pneumothorax */ {"pneumothorax", "pneumothoraces"},
            /* Pleural Effusion */ {"effusion", "effusions"},
            /* Pleural Other */
            {"pleural thickening", "pleural scarring", "fibrothorax"},
            /* Fracture */ {"fracture", "fractures"},
            /* Support Devices */
            {"tube", "catheter", "pacemaker", "picc", "stent", "device", "valve"},
        };
        std::vector<std::vector<Tokens>> out;
        for (const auto& row : raw) {
            std::vector<Tokens> toks;
            for (const auto& phrase : row) toks.push_back(split_tokens(phrase));
            out.push_back(std::move(toks));
        }
        return out;
    }();
    return phrases;
}

const std::vector<Tokens>& negation_cues() {
    static const std::vector<Tokens> cues = [] {
        std::vector<Tokens> out;
        for (const char* cue :
             {"no", "not", "without", "free of", "negative for", "clear of",
              "resolution of"})
            out.push_back(split_tokens(cue));
        return out;
    }();
    return cues;
}

bool phrase_at(const Tokens& toks, size_t pos, const Tokens& phrase) {
    if (pos + phrase.size() > toks.size()) return false;
    for (size_t k = 0; k < phrase.size(); ++k)
        if (toks[pos + k] != phrase[k]) return false;
    return true;
}

} // namespace

LabelVector extract_labels(const std::string& report) {
    LabelVector out{};
    out.fill(LabelState::absent);

    std::stringstream ss(report);
    std::string sentence;
    while (std::getline(ss, sentence, '.')) {
        const Tokens toks = split_tokens(sentence);
        if (toks.empty()) continue;
        // Ends (exclusive) of negation cues present in this sentence.
        std::vector<size_t> cue_ends;
        for (size_t pos = 0; pos < toks.size(); ++pos)
            for (const Tokens& cue : negation_cues())
                if (phrase_at(toks, pos, cue)) cue_ends.push_back(pos + cue.size());
        const auto& phrases = label_phrases();
        for (int label = 1; label < kNumLabels; ++label) {
            for (size_t pos = 0; pos < toks.size(); ++pos) {
                bool hit = false;
                for (const Tokens& phrase : phrases[label])
                    if (phrase_at(toks, pos, phrase)) { hit = true; break; }
                if (!hit) continue;
                bool negated = false;
                for (size_t end : cue_ends)
                    if (end <= pos && pos - end < 5) { negated = true; break; }
                // A positive mention anywhere wins over a negated one.
                if (!negated)
                    out[label] = LabelState::positive;
                else if (out[label] == LabelState::absent)
                    out[label] = LabelState::negative;
            }
        }
    }

    bool any_positive = false;
    for (int label = 1; label < kNumLabels; ++label)
        if (out[label] == LabelState::positive) any_positive = true;
    out[0] = any_positive ? LabelState::absent : LabelState::positive;
    return out;
}

CeScores ce_scores(const std::vector<LabelVector>& hyp_labels,
                   const std::vector<LabelVector>& ref_labels) {
    if (hyp_labels.size() != ref_labels.size())
        fail(Err::LengthMismatch, "ce_scores: " + std::to_string(hyp_labels.size()) +
                             " hypothesis rows vs " + std::to_string(ref_labels.size()) +
                             " reference rows");
    long long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < hyp_labels.size(); ++i) {
        for (int label = 0; label < kNumLabels; ++label) {
            const bool h = hyp_labels[i][label] == LabelState::positive;
            const bool r = ref_labels[i][label] == LabelState::positive;
            if (h && r) ++tp;
            else if (h) ++fp;
            else if (r) ++fn;
        }
    }
    CeScores s;
    s.precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    s.recall = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall > 0.0)
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

std::vector<LabelVector> load_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Err::IoError, "cannot open label file: " + path);
    std::vector<LabelVector> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(Err::ParseError, std::string("label file: ") + e.what(), lineno);
        }
        if (!j.is_array() || j.size() != kNumLabels)
            fail(Err::ParseError,
                 "label file: expected array of " + std::to_string(kNumLabels) +
                     " states",
                 lineno);
        LabelVector v{};
        for (int k = 0; k < kNumLabels; ++k) {
            const auto& cell = j[k];
            if (cell.is_string()) {
                const std::string s = cell.get<std::string>();
                if (s == "positive") v[k] = LabelState::positive;
                else if (s == "negative") v[k] = LabelState::negative;
                else if (s == "absent") v[k] = LabelState::absent;
                else
                    fail(Err::ParseError, "label file: unknown state \"" + s + "\"", lineno);
            } else if (cell.is_number_integer()) {
                const int n = cell.get<int>();
                if (n < 0 || n > 2)
                    fail(Err::ParseError,
                         "label file: state out of range: " + std::to_string(n), lineno);
                v[k] = static_cast<LabelState>(n);
            } else {
                fail(Err::ParseError, "label file: state must be a string or integer", lineno);
            }
        }
        out.push_back(v);
    }
    return out;
}

} // namespace m3kg
