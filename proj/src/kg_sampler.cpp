// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/kg_sampler.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "m3kg/errors.hpp"

namespace m3kg {
namespace {

using nlohmann::json;

std::vector<Triple> sorted_triples(const KnowledgeGraph& g) {
    std::vector<Triple> ts = g.triples;
    std::stable_sort(ts.begin(), ts.end(), [&](const Triple& a, const Triple& b) {
        if (a.count != b.count) return a.count > b.count;
        const std::string& ahn = g.entities[a.head_id].name;
        const std::string& bhn = g.entities[b.head_id].name;
        if (ahn != bhn) return ahn < bhn;
        const std::string& atn = g.entities[a.tail_id].name;
        const std::string& btn = g.entities[b.tail_id].name;
        if (atn != btn) return atn < btn;
        return static_cast<int>(a.relation) < static_cast<int>(b.relation);
    });
    return ts;
}

void attach_edge_tensors(Subgraph& sg) {
    std::unordered_map<int, int> pos;
    for (size_t i = 0; i < sg.node_ids.size(); ++i) pos[sg.node_ids[i]] = static_cast<int>(i);
    sg.edge_index.head.clear();
    sg.edge_index.tail.clear();
    sg.edge_type.clear();
    for (const Triple& t : sg.triples) {
        sg.edge_index.head.push_back(pos.at(t.head_id));
        sg.edge_index.tail.push_back(pos.at(t.tail_id));
        sg.edge_type.push_back(static_cast<int>(t.relation));
    }
}

// Greedy admission over a pre-sorted triple list with a node budget.
Subgraph greedy_admit(const std::vector<Triple>& sorted, int budget) {
    Subgraph sg;
    std::unordered_map<int, int> pos;
    for (const Triple& t : sorted) {
        int need = pos.count(t.head_id) ? 0 : 1;
        if (t.tail_id != t.head_id && !pos.count(t.tail_id)) ++need;
        if (static_cast<int>(sg.node_ids.size()) + need > budget) continue;
        if (!pos.count(t.head_id)) {
            pos[t.head_id] = static_cast<int>(sg.node_ids.size());
            sg.node_ids.push_back(t.head_id);
        }
        if (!pos.count(t.tail_id)) {
            pos[t.tail_id] = static_cast<int>(sg.node_ids.size());
            sg.node_ids.push_back(t.tail_id);
        }
        sg.triples.push_back(t);
    }
    attach_edge_tensors(sg);
    return sg;
}

} // namespace

Subgraph prune_to_budget(const KnowledgeGraph& g, int budget) {
    if (budget < 0) fail(Err::BadBudgets, "prune_to_budget: negative budget");
    return greedy_admit(sorted_triples(g), budget);
}

MultiScaleGraph build_multiscale(const KnowledgeGraph& g, const std::vector<int>& budgets) {
    if (budgets.empty()) fail(Err::BadBudgets, "build_multiscale: empty budget list");
    for (size_t i = 0; i < budgets.size(); ++i) {
        if (budgets[i] < 0) fail(Err::BadBudgets, "build_multiscale: negative budget");
        if (i > 0 && budgets[i] <= budgets[i - 1])
            fail(Err::BadBudgets, "build_multiscale: budgets must be strictly increasing");
    }

    const Subgraph largest = greedy_admit(sorted_triples(g), budgets.back());

    MultiScaleGraph ms;
    int offset = 0;
    for (int b : budgets) {
        const int n = std::min<int>(b, static_cast<int>(largest.node_ids.size()));
        Subgraph sg;
        sg.node_ids.assign(largest.node_ids.begin(), largest.node_ids.begin() + n);
        std::vector<char> inside(g.entities.size(), 0);
        for (int id : sg.node_ids) inside[id] = 1;
        for (const Triple& t : largest.triples)
            if (inside[t.head_id] && inside[t.tail_id]) sg.triples.push_back(t);
        attach_edge_tensors(sg);
        ms.offsets.push_back(offset);
        offset += n;
        ms.scales.emplace_back(b, std::move(sg));
    }
    return ms;
}

std::pair<EdgeIndex, std::vector<int>> build_edge_tensors(const Subgraph& sg) {
    std::unordered_map<int, int> pos;
    for (size_t i = 0; i < sg.node_ids.size(); ++i) pos[sg.node_ids[i]] = static_cast<int>(i);
    EdgeIndex ei;
    std::vector<int> et;
    for (const Triple& t : sg.triples) {
        auto hi = pos.find(t.head_id);
        auto ti = pos.find(t.tail_id);
        if (hi == pos.end() || ti == pos.end())
            fail(Err::UnknownEntity, "build_edge_tensors: dangling triple endpoint");
        ei.head.push_back(hi->second);
        ei.tail.push_back(ti->second);
        et.push_back(static_cast<int>(t.relation));
    }
    return {std::move(ei), std::move(et)};
}

void save_scales(const KnowledgeGraph& g, const MultiScaleGraph& ms, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Err::IoError, "save_scales: cannot open " + path);
    json header = {{"kind", "header"}, {"format", "m3kg"}, {"version", 1},
                   {"d_vision", g.d_vision}};
    out << header.dump() << "\n";
    for (const auto& [budget, sg] : ms.scales) {
        json sh = {{"kind", "scale"},
                   {"budget", budget},
                   {"n_nodes", sg.node_ids.size()},
                   {"n_triples", sg.triples.size()}};
        out << sh.dump() << "\n";
        for (int id : sg.node_ids) {
            const Entity& e = g.entities[id];
            json j = {{"kind", "entity"},      {"cui", e.cui},
                      {"name", e.name},        {"entity_type", to_string(e.entity_type)},
                      {"aliases", e.aliases},  {"definition", e.definition},
                      {"tui", e.tui}};
            out << j.dump() << "\n";
        }
        for (const Triple& t : sg.triples) {
            json j = {{"kind", "triple"},
                      {"head_cui", g.entities[t.head_id].cui},
                      {"tail_cui", g.entities[t.tail_id].cui},
                      {"relation", to_string(t.relation)},
                      {"count", t.count}};
            out << j.dump() << "\n";
        }
    }
    if (!out) fail(Err::IoError, "save_scales: write failed for " + path);
}

} // namespace m3kg
