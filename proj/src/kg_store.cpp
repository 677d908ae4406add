// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "m3kg/errors.hpp"

namespace m3kg {
namespace {

using nlohmann::json;

std::string fold(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

uint64_t triple_key(int head, int tail, RelationType rel) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(head)) << 34) |
           (static_cast<uint64_t>(static_cast<uint32_t>(tail)) << 2) |
           static_cast<uint64_t>(static_cast<int>(rel));
}

void check_mutable(const KnowledgeGraph& g, const char* op) {
    if (g.frozen()) fail(Err::FrozenGraph, std::string(op) + ": graph is frozen");
}

} // namespace

EntityType parse_entity_type(const std::string& s) {
    if (s == "Anatomy") return EntityType::Anatomy;
    if (s == "Disorder") return EntityType::Disorder;
    if (s == "Concept") return EntityType::Concept;
    if (s == "Device") return EntityType::Device;
    if (s == "Procedure") return EntityType::Procedure;
    if (s == "Size") return EntityType::Size;
    fail(Err::BadEntityType, "unknown entity type: " + s);
}

std::string to_string(EntityType t) {
    switch (t) {
        case EntityType::Anatomy: return "Anatomy";
        case EntityType::Disorder: return "Disorder";
        case EntityType::Concept: return "Concept";
        case EntityType::Device: return "Device";
        case EntityType::Procedure: return "Procedure";
        case EntityType::Size: return "Size";
    }
    fail(Err::BadEntityType, "corrupt entity type value");
}

RelationType parse_relation(const std::string& s) {
    if (s == "located_at") return RelationType::located_at;
    if (s == "modify") return RelationType::modify;
    if (s == "suggestive_of") return RelationType::suggestive_of;
    fail(Err::ParseError, "unknown relation: " + s);
}

std::string to_string(RelationType r) {
    switch (r) {
        case RelationType::located_at: return "located_at";
        case RelationType::modify: return "modify";
        case RelationType::suggestive_of: return "suggestive_of";
    }
    fail(Err::ParseError, "corrupt relation value");
}

int add_entity(KnowledgeGraph& g, const Entity& rec) {
    check_mutable(g, "add_entity");
    if (rec.cui.empty()) fail(Err::EmptyField, "add_entity: empty cui");
    if (rec.name.empty()) fail(Err::EmptyField, "add_entity: empty name");

    const std::string key = fold(rec.cui);
    int id = -1;
    if (auto it = g.cui_index_.find(key); it != g.cui_index_.end()) {
        id = it->second;
    } else if (g.merge_hook) {
        id = g.merge_hook(g, rec);
        if (id < -1 || id >= static_cast<int>(g.entities.size()))
            fail(Err::IndexOutOfRange, "add_entity: merge hook returned bad id");
    }

    if (id < 0) {
        Entity e = rec;
        e.id = static_cast<int>(g.entities.size());
        e.aliases.clear();
        std::vector<std::string> seen;
        for (const auto& a : rec.aliases) {
            const std::string f = fold(a);
            if (std::find(seen.begin(), seen.end(), f) == seen.end()) {
                seen.push_back(f);
                e.aliases.push_back(a);
            }
        }
        g.cui_index_.emplace(key, e.id);
        g.entities.push_back(std::move(e));
        return static_cast<int>(g.entities.size()) - 1;
    }

    Entity& e = g.entities[id];
    for (const auto& a : rec.aliases) {
        const std::string f = fold(a);
        bool present = false;
        for (const auto& have : e.aliases)
            if (fold(have) == f) { present = true; break; }
        if (!present) e.aliases.push_back(a);
    }
    return id;
}

int add_triple(KnowledgeGraph& g, int head_id, int tail_id, RelationType relation) {
    check_mutable(g, "add_triple");
    const int n = static_cast<int>(g.entities.size());
    if (head_id < 0 || head_id >= n)
        fail(Err::UnknownEntity, "add_triple: unknown head id " + std::to_string(head_id));
    if (tail_id < 0 || tail_id >= n)
        fail(Err::UnknownEntity, "add_triple: unknown tail id " + std::to_string(tail_id));
    if (head_id == tail_id && relation != RelationType::modify)
        fail(Err::SelfLoop, "add_triple: self loop only allowed for modify");

    const uint64_t key = triple_key(head_id, tail_id, relation);
    if (auto it = g.triple_index_.find(key); it != g.triple_index_.end()) {
        g.triples[it->second].count += 1;
        return it->second;
    }
    Triple t;
    t.head_id = head_id;
    t.tail_id = tail_id;
    t.relation = relation;
    t.count = 1;
    const int idx = static_cast<int>(g.triples.size());
    g.triple_index_.emplace(key, idx);
    g.triples.push_back(t);
    return idx;
}

int add_vision_token(KnowledgeGraph& g, int label_index, std::vector<double> feature,
                     const std::string& source_id) {
    check_mutable(g, "add_vision_token");
    if (label_index < 0 || label_index >= kNumDiseaseLabels)
        fail(Err::IndexOutOfRange,
             "add_vision_token: label_index " + std::to_string(label_index) +
                 " outside [0, " + std::to_string(kNumDiseaseLabels) + ")");
    if (static_cast<int>(feature.size()) != g.d_vision)
        fail(Err::BadDim, "add_vision_token: feature length " +
                              std::to_string(feature.size()) + " != d_vision " +
                              std::to_string(g.d_vision));
    for (double v : feature)
        if (!std::isfinite(v)) fail(Err::BadDim, "add_vision_token: non-finite feature");
    VisionToken tok;
    tok.id = static_cast<int>(g.vision_tokens.size());
    tok.label_index = label_index;
    tok.feature = std::move(feature);
    tok.source_id = source_id;
    g.vision_tokens.push_back(std::move(tok));
    return static_cast<int>(g.vision_tokens.size()) - 1;
}

GraphStats stats(const KnowledgeGraph& g) {
    GraphStats s;
    s.n_entities = static_cast<long long>(g.entities.size());
    s.n_triples = static_cast<long long>(g.triples.size());
    for (const Triple& t : g.triples) {
        s.n_triple_instances += t.count;
        s.per_relation_counts[static_cast<int>(t.relation)] += 1;
    }
    s.n_vision_tokens = static_cast<long long>(g.vision_tokens.size());
    return s;
}

void save(const KnowledgeGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Err::IoError, "save: cannot open " + path);
    json header = {{"kind", "header"}, {"format", "m3kg"}, {"version", 1},
                   {"d_vision", g.d_vision}};
    out << header.dump() << "\n";
    for (const Entity& e : g.entities) {
        json j = {{"kind", "entity"},      {"cui", e.cui},
                  {"name", e.name},        {"entity_type", to_string(e.entity_type)},
                  {"aliases", e.aliases},  {"definition", e.definition},
                  {"tui", e.tui}};
        out << j.dump() << "\n";
    }
    for (const Triple& t : g.triples) {
        json j = {{"kind", "triple"},
                  {"head_cui", g.entities[t.head_id].cui},
                  {"tail_cui", g.entities[t.tail_id].cui},
                  {"relation", to_string(t.relation)},
                  {"count", t.count}};
        out << j.dump() << "\n";
    }
    for (const VisionToken& v : g.vision_tokens) {
        json j = {{"kind", "vision_token"},
                  {"label_index", v.label_index},
                  {"source_id", v.source_id},
                  {"feature", v.feature}};
        out << j.dump() << "\n";
    }
    if (!out) fail(Err::IoError, "save: write failed for " + path);
}

KnowledgeGraph load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoError, "load: cannot open " + path);

    KnowledgeGraph g;
    std::string line;
    int lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            fail(Err::ParseError, "load: malformed JSON", lineno);
        if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
            fail(Err::ParseError, "load: record without string kind", lineno);
        const std::string kind = j["kind"];

        if (!have_header) {
            if (kind != "header")
                fail(Err::ParseError, "load: first record must be the header", lineno);
            if (j.value("format", "") != "m3kg")
                fail(Err::ParseError, "load: unknown format", lineno);
            if (j.value("version", -1) != 1)
                fail(Err::SchemaVersionMismatch,
                     "load: unsupported version " + j.value("version", json()).dump(), lineno);
            if (!j.contains("d_vision") || !j["d_vision"].is_number_integer())
                fail(Err::ParseError, "load: header missing d_vision", lineno);
            g.d_vision = j["d_vision"];
            have_header = true;
            continue;
        }

        try {
            if (kind == "header") {
                fail(Err::ParseError, "load: duplicate header", lineno);
            } else if (kind == "entity") {
                Entity e;
                e.cui = j.value("cui", "");
                e.name = j.value("name", "");
                e.entity_type = parse_entity_type(j.value("entity_type", ""));
                if (j.contains("aliases"))
                    e.aliases = j["aliases"].get<std::vector<std::string>>();
                e.definition = j.value("definition", "");
                e.tui = j.value("tui", "");
                add_entity(g, e);
            } else if (kind == "triple") {
                const std::string head = j.value("head_cui", "");
                const std::string tail = j.value("tail_cui", "");
                auto hi = g.cui_index_.find(fold(head));
                auto ti = g.cui_index_.find(fold(tail));
                if (hi == g.cui_index_.end())
                    fail(Err::ParseError, "load: triple references unknown cui " + head, lineno);
                if (ti == g.cui_index_.end())
                    fail(Err::ParseError, "load: triple references unknown cui " + tail, lineno);
                const long long count = j.value("count", 1LL);
                if (count < 0) fail(Err::ParseError, "load: negative triple count", lineno);
                const int idx =
                    add_triple(g, hi->second, ti->second, parse_relation(j.value("relation", "")));
                g.triples[idx].count += count - 1;  // add_triple seeded count 1
            } else if (kind == "vision_token") {
                if (!j.contains("feature") || !j["feature"].is_array())
                    fail(Err::ParseError, "load: vision_token missing feature array", lineno);
                add_vision_token(g, j.value("label_index", -1),
                                 j["feature"].get<std::vector<double>>(),
                                 j.value("source_id", ""));
            } else {
                fail(Err::ParseError, "load: unknown record kind \"" + kind + "\"", lineno);
            }
        } catch (const Error& e) {
            if (e.line() >= 0) throw;
            fail(e.code(), e.what(), lineno);  // attach the line to record-level errors
        } catch (const json::exception& e) {
            fail(Err::ParseError, std::string("load: ") + e.what(), lineno);
        }
    }
    if (!have_header) fail(Err::ParseError, "load: empty file (missing header)", 1);
    return g;
}

bool graph_equal(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    if (a.d_vision != b.d_vision) return false;
    if (a.entities.size() != b.entities.size() || a.triples.size() != b.triples.size() ||
        a.vision_tokens.size() != b.vision_tokens.size())
        return false;
    for (size_t i = 0; i < a.entities.size(); ++i) {
        const Entity& x = a.entities[i];
        const Entity& y = b.entities[i];
        if (x.id != y.id || x.cui != y.cui || x.name != y.name ||
            x.entity_type != y.entity_type || x.aliases != y.aliases ||
            x.definition != y.definition || x.tui != y.tui)
            return false;
    }
    for (size_t i = 0; i < a.triples.size(); ++i) {
        const Triple& x = a.triples[i];
        const Triple& y = b.triples[i];
        if (x.head_id != y.head_id || x.tail_id != y.tail_id || x.relation != y.relation ||
            x.count != y.count)
            return false;
    }
    for (size_t i = 0; i < a.vision_tokens.size(); ++i) {
        const VisionToken& x = a.vision_tokens[i];
        const VisionToken& y = b.vision_tokens[i];
        if (x.id != y.id || x.label_index != y.label_index || x.source_id != y.source_id)
            return false;
        if (x.feature.size() != y.feature.size()) return false;
        if (!x.feature.empty() &&
            std::memcmp(x.feature.data(), y.feature.data(),
                        x.feature.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::string export_dot(const KnowledgeGraph& g, int max_nodes) {
    if (max_nodes < 0) fail(Err::IndexOutOfRange, "export_dot: negative max_nodes");
    // Incident-triple count: number of triples in which the entity appears
    // as head or tail (a self-loop triple counts once).
    std::vector<long long> incident(g.entities.size(), 0);
    for (const Triple& t : g.triples) {
        incident[t.head_id] += 1;
        if (t.tail_id != t.head_id) incident[t.tail_id] += 1;
    }
    std::vector<int> order(g.entities.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        if (incident[x] != incident[y]) return incident[x] > incident[y];
        return g.entities[x].name < g.entities[y].name;
    });
    const int n_keep = std::min<int>(max_nodes, static_cast<int>(order.size()));
    std::vector<char> kept(g.entities.size(), 0);
    for (int i = 0; i < n_keep; ++i) kept[order[i]] = 1;

    std::ostringstream out;
    out << "digraph M3KG {\n";
    for (int i = 0; i < n_keep; ++i) {
        const Entity& e = g.entities[order[i]];
        out << "  n" << e.id << " [label=\"" << e.name << "(" << to_string(e.entity_type)
            << ")\"];\n";
    }
    for (const Triple& t : g.triples) {
        if (!kept[t.head_id] || !kept[t.tail_id]) continue;
        out << "  n" << t.head_id << " -> n" << t.tail_id << " [label=\""
            << to_string(t.relation) << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace m3kg
