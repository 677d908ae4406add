// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m3kg/errors.hpp"
#include "m3kg/pgm.hpp"
#include "m3kg/rng.hpp"

namespace m3kg {

namespace {

constexpr int kCell = 8;  // pattern cell side; matches the patch encoder

struct EntityDef {
    const char* name;
    const char* cui;
    EntityType type;
};

// Fixed entity table; names shared across templates resolve to one entity.
// The lung keeps its standard concept identifier; the rest are synthetic.
const EntityDef* entity_def(const std::string& name) {
    static const std::vector<EntityDef> defs = {
        {"chest", "C1000001", EntityType::Anatomy},
        {"heart", "C1000002", EntityType::Anatomy},
        {"lung", "C0024109", EntityType::Anatomy},
        {"pleura", "C1000004", EntityType::Anatomy},
        {"rib", "C1000005", EntityType::Anatomy},
        {"enlarged cardiomediastinum", "C1000010", EntityType::Disorder},
        {"cardiomegaly", "C1000011", EntityType::Disorder},
        {"opacity", "C1000012", EntityType::Disorder},
        {"nodule", "C1000013", EntityType::Disorder},
        {"edema", "C1000014", EntityType::Disorder},
        {"consolidation", "C1000015", EntityType::Disorder},
        {"pneumonia", "C1000016", EntityType::Disorder},
        {"atelectasis", "C1000017", EntityType::Disorder},
        {"pneumothorax", "C1000018", EntityType::Disorder},
        {"effusion", "C1000019", EntityType::Disorder},
        {"pleural thickening", "C1000020", EntityType::Disorder},
        {"fracture", "C1000021", EntityType::Disorder},
        {"tube", "C1000022", EntityType::Device},
        {"mild", "C1000030", EntityType::Concept},
        {"hazy", "C1000031", EntityType::Concept},
        {"small", "C1000032", EntityType::Concept},
        {"patchy", "C1000033", EntityType::Concept},
        {"focal", "C1000034", EntityType::Concept},
        {"linear", "C1000035", EntityType::Concept},
        {"acute", "C1000036", EntityType::Concept},
        {"support", "C1000037", EntityType::Concept},
    };
    for (const auto& d : defs)
        if (name == d.name) return &d;
    return nullptr;
}

int ensure_entity(KnowledgeGraph& g, const std::string& name) {
    const EntityDef* def = entity_def(name);
    if (!def) fail(Err::BadParams, "synth: no entity definition for \"" + name + "\"");
    Entity e;
    e.cui = def->cui;
    e.name = def->name;
    e.entity_type = def->type;
    return add_entity(g, e);
}

std::string pad4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", n);
    return buf;
}

std::string pad2(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", n);
    return buf;
}

} // namespace

const std::vector<DiseaseTemplate>& disease_catalog() {
    static const std::vector<DiseaseTemplate> catalog = {
        {1, nullptr, "enlarged cardiomediastinum", "chest", nullptr, 76},
        {2, "mild", "cardiomegaly", "heart", nullptr, 88},
        {3, "hazy", "opacity", "lung", nullptr, 100},
        {4, "small", "nodule", "lung", nullptr, 112},
        {5, "mild", "edema", "lung", nullptr, 124},
        {6, "patchy", "consolidation", "lung", "pneumonia", 136},
        {7, "focal", "pneumonia", "lung", nullptr, 148},
        {8, "linear", "atelectasis", "lung", nullptr, 160},
        {9, "small", "pneumothorax", "pleura", nullptr, 172},
        {10, "small", "effusion", "pleura", nullptr, 184},
        {11, nullptr, "pleural thickening", "chest", nullptr, 196},
        {12, "acute", "fracture", "rib", nullptr, 208},
        {13, "support", "tube", "chest", nullptr, 220},
    };
    return catalog;
}

std::string disease_sentence(const DiseaseTemplate& t) {
    std::string s;
    if (t.modifier) {
        s += t.modifier;
        s += ' ';
    }
    s += t.finding;
    s += " is seen in the ";
    s += t.anatomy;
    s += '.';
    if (t.suggestive) {
        s += " findings are suggestive of ";
        s += t.suggestive;
        s += '.';
    }
    return s;
}

SynthCorpus synth_corpus(const SynthSpec& spec) {
    if (spec.n_pairs < 1) fail(Err::BadParams, "synth: n_pairs must be positive");
    if (spec.grid < 32 || spec.grid % kCell != 0)
        fail(Err::BadParams, "synth: grid must be a multiple of " + std::to_string(kCell) +
                                 " and at least 32");
    const int n_catalog = static_cast<int>(disease_catalog().size());
    if (spec.n_diseases < 0 || spec.n_diseases > n_catalog)
        fail(Err::BadParams, "synth: n_diseases must be in [0, " +
                                 std::to_string(n_catalog) + "]");
    if (spec.d_vision < 1) fail(Err::BadParams, "synth: d_vision must be positive");

    SynthCorpus out;
    out.spec = spec;
    out.kg.d_vision = spec.d_vision;
    Rng rng(spec.seed);

    for (int p = 0; p < spec.n_pairs; ++p) {
        SynthPair pair;
        pair.id = "img_" + pad4(p);
        pair.image = Mat(spec.grid, spec.grid);

        // Draw a subset of at most three catalog diseases, label-sorted.
        const int max_draw = std::min(3, spec.n_diseases);
        const int n_draw = rng.below(max_draw + 1);
        std::vector<int> pool(spec.n_diseases);
        for (int i = 0; i < spec.n_diseases; ++i) pool[i] = i;
        for (int i = 0; i < n_draw; ++i)
            std::swap(pool[i], pool[i + rng.below(spec.n_diseases - i)]);
        std::vector<int> drawn(pool.begin(), pool.begin() + n_draw);
        std::sort(drawn.begin(), drawn.end());

        std::string report;
        for (int idx : drawn) {
            const DiseaseTemplate& t = disease_catalog()[idx];
            // pattern cell: label-1 indexes a 4x4 grid of kCell x kCell cells
            const int r0 = kCell * ((t.label - 1) / 4);
            const int c0 = kCell * ((t.label - 1) % 4);
            Mat act(spec.grid, spec.grid);
            for (int r = r0; r < r0 + kCell; ++r)
                for (int c = c0; c < c0 + kCell; ++c) {
                    pair.image(r, c) = t.intensity_byte / 255.0;
                    act(r, c) = 1.0;
                }
            pair.activation_maps.push_back({t.label, std::move(act)});

            if (!report.empty()) report += ' ';
            report += disease_sentence(t);

            // implied triples, counted per occurrence
            const int finding = ensure_entity(out.kg, t.finding);
            const int anatomy = ensure_entity(out.kg, t.anatomy);
            add_triple(out.kg, finding, anatomy, RelationType::located_at);
            if (t.modifier) {
                const int modifier = ensure_entity(out.kg, t.modifier);
                add_triple(out.kg, modifier, finding, RelationType::modify);
            }
            if (t.suggestive) {
                const int target = ensure_entity(out.kg, t.suggestive);
                add_triple(out.kg, finding, target, RelationType::suggestive_of);
            }

            // one seeded vision token per occurrence
            std::vector<double> feature(spec.d_vision);
            for (double& v : feature) v = rng.uniform(-1.0, 1.0);
            add_vision_token(out.kg, t.label, std::move(feature), pair.id);
        }
        if (report.empty()) report = "no acute findings.";
        pair.report = report;
        pair.gold_labels = extract_labels(report);
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

void write_corpus(const SynthCorpus& c, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(Err::IoError, "synth: cannot create directory " + dir);

    std::ofstream pairs_out(dir + "/pairs.jsonl");
    if (!pairs_out) fail(Err::IoError, "synth: cannot write " + dir + "/pairs.jsonl");
    for (const SynthPair& p : c.pairs) {
        const std::string image_file = p.id + ".pgm";
        write_pgm(dir + "/" + image_file, p.image);
        nlohmann::json maps = nlohmann::json::array();
        for (const auto& [label, act] : p.activation_maps) {
            const std::string act_file = "act_" + p.id + "_" + pad2(label) + ".pgm";
            write_pgm(dir + "/" + act_file, act);
            maps.push_back({label, act_file});
        }
        nlohmann::json labels = nlohmann::json::array();
        for (LabelState s : p.gold_labels) labels.push_back(static_cast<int>(s));
        const nlohmann::json rec = {{"id", p.id},
                                    {"image", image_file},
                                    {"report", p.report},
                                    {"gold_labels", labels},
                                    {"activation_maps", maps}};
        pairs_out << rec.dump() << "\n";
    }
    pairs_out.close();

    save(c.kg, dir + "/kg.jsonl");

    const nlohmann::json manifest = {{"kind", "m3kg_synth"},
                                     {"version", 1},
                                     {"seed", c.spec.seed},
                                     {"n_pairs", c.spec.n_pairs},
                                     {"grid", c.spec.grid},
                                     {"n_diseases", c.spec.n_diseases},
                                     {"d_vision", c.spec.d_vision},
                                     {"pairs_file", "pairs.jsonl"},
                                     {"kg_file", "kg.jsonl"}};
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) fail(Err::IoError, "synth: cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

LoadedCorpus load_corpus(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) fail(Err::IoError, "corpus: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::parse_error& e) {
        fail(Err::ParseError, std::string("corpus manifest: ") + e.what(), 1);
    }
    if (!manifest.is_object() || manifest.value("kind", "") != "m3kg_synth")
        fail(Err::ParseError, "corpus manifest: not an m3kg_synth manifest", 1);
    if (manifest.value("version", 0) != 1)
        fail(Err::SchemaVersionMismatch,
             "corpus manifest: unsupported version " +
                 std::to_string(manifest.value("version", 0)));

    LoadedCorpus out;
    out.grid = manifest.value("grid", 0);
    out.kg = load(dir + "/" + manifest.value("kg_file", "kg.jsonl"));

    const std::string pairs_path = dir + "/" + manifest.value("pairs_file", "pairs.jsonl");
    std::ifstream in(pairs_path);
    if (!in) fail(Err::IoError, "corpus: cannot open " + pairs_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(Err::ParseError, std::string("corpus pairs: ") + e.what(), lineno);
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("image") ||
            !rec.contains("report") || !rec.contains("gold_labels") ||
            !rec.contains("activation_maps"))
            fail(Err::ParseError,
                 "corpus pairs: record needs id/image/report/gold_labels/activation_maps",
                 lineno);
        SynthPair p;
        p.id = rec["id"].get<std::string>();
        p.report = rec["report"].get<std::string>();
        if (p.report.empty())
            fail(Err::ParseError, "corpus pairs: empty report for " + p.id, lineno);
        const auto& labels = rec["gold_labels"];
        if (!labels.is_array() || labels.size() != static_cast<size_t>(kNumLabels))
            fail(Err::ParseError,
                 "corpus pairs: gold_labels must have " + std::to_string(kNumLabels) +
                     " entries",
                 lineno);
        for (int i = 0; i < kNumLabels; ++i) {
            const int v = labels[i].get<int>();
            if (v < 0 || v > 2)
                fail(Err::ParseError, "corpus pairs: label state out of range", lineno);
            p.gold_labels[i] = static_cast<LabelState>(v);
        }
        p.image = read_pgm(dir + "/" + rec["image"].get<std::string>());
        for (const auto& entry : rec["activation_maps"]) {
            if (!entry.is_array() || entry.size() != 2)
                fail(Err::ParseError, "corpus pairs: activation map entries are [label, path]",
                     lineno);
            const int label = entry[0].get<int>();
            if (label < 0 || label >= kNumLabels)
                fail(Err::ParseError, "corpus pairs: activation label out of range", lineno);
            p.activation_maps.push_back(
                {label, read_pgm(dir + "/" + entry[1].get<std::string>())});
        }
        out.pairs.push_back(std::move(p));
    }
    return out;
}

} // namespace m3kg
