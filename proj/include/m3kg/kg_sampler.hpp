// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Frequency-ranked pruning of a knowledge graph into nested multi-granularity
// subgraphs, and edge-tensor construction for the graph encoder.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "m3kg/kg_store.hpp"

namespace m3kg {

// Row 0 = head positions, row 1 = tail positions; positions index node_ids.
struct EdgeIndex {
    std::vector<int> head;
    std::vector<int> tail;
};

struct Subgraph {
    std::vector<int> node_ids;   // entity ids, first-inclusion order
    std::vector<Triple> triples; // retained triples, frequency-sorted order
    EdgeIndex edge_index;
    std::vector<int> edge_type;  // relation codes, one per triple
};

struct MultiScaleGraph {
    std::vector<std::pair<int, Subgraph>> scales;  // (budget, subgraph)
    std::vector<int> offsets;  // exclusive prefix sums of per-scale node counts
    int total_nodes() const {
        int n = 0;
        for (const auto& [b, sg] : scales) n += static_cast<int>(sg.node_ids.size());
        return n;
    }
};

// Deterministic greedy pruning: triples sorted by (count desc, head name asc,
// tail name asc, relation code asc) are admitted while the running distinct
// node count stays within the budget; a triple that would exceed it is
// skipped and scanning continues.
Subgraph prune_to_budget(const KnowledgeGraph& g, int budget);

// Multi-granularity views sharing one node ordering. The greedy selection
// runs once at the largest budget; smaller scales take the first budget[i]
// nodes of that order plus the triples with both endpoints inside the prefix.
// This makes the nestedness invariant (node_ids of scale i is a prefix of
// scale i+1) hold unconditionally; per-budget independent greedy runs do not
// guarantee it, because a triple skipped at a small budget can make room for
// different nodes than the triple admitted at a larger one.
MultiScaleGraph build_multiscale(const KnowledgeGraph& g, const std::vector<int>& budgets);

// Recomputes (edge_index, edge_type) from the subgraph's triples and node
// order: column j = (position of head of triple j, position of tail).
std::pair<EdgeIndex, std::vector<int>> build_edge_tensors(const Subgraph& sg);

// Writes one scale section per budget: a {"kind":"scale"} header followed by
// entity and triple records in kg_store's JSONL conventions.
void save_scales(const KnowledgeGraph& g, const MultiScaleGraph& ms,
                 const std::string& path);

} // namespace m3kg
