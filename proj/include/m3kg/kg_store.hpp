// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Typed multi-modal knowledge-graph container: entities, relation triples,
// and vision tokens, with JSONL persistence, deduplication, statistics, and
// DOT export.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace m3kg {

enum class EntityType { Anatomy, Disorder, Concept, Device, Procedure, Size };

// Relation codes are part of the persistence format and of edge_type tensors;
// they must never be renumbered.
enum class RelationType : int { located_at = 0, modify = 1, suggestive_of = 2 };

EntityType parse_entity_type(const std::string& s);     // throws BadEntityType
std::string to_string(EntityType t);
RelationType parse_relation(const std::string& s);      // throws ParseError
std::string to_string(RelationType r);

struct Entity {
    int id = -1;              // surrogate key, assigned in insertion order
    std::string cui;          // concept unique identifier, non-empty
    std::string name;         // non-empty
    EntityType entity_type = EntityType::Concept;
    std::vector<std::string> aliases;  // no duplicates after case-folding
    std::string definition;   // may be empty
    std::string tui;          // may be empty
};

struct Triple {
    int head_id = -1;
    int tail_id = -1;
    RelationType relation = RelationType::located_at;
    // Number of source reports contributing this triple; re-adding increments.
    long long count = 0;
};

struct VisionToken {
    int id = -1;
    int label_index = -1;     // in [0, 14)
    std::vector<double> feature;  // length d_vision, finite
    std::string source_id;    // originating image identifier
};

constexpr int kNumDiseaseLabels = 14;

struct GraphStats {
    long long n_entities = 0;
    long long n_triples = 0;            // unique (head, tail, relation) keys
    long long n_triple_instances = 0;   // sum of counts
    long long n_vision_tokens = 0;
    std::array<long long, 3> per_relation_counts{};  // unique keys per code
};

struct KnowledgeGraph {
    std::vector<Entity> entities;       // index = id
    std::vector<Triple> triples;
    std::vector<VisionToken> vision_tokens;
    int d_vision = 0;

    // Optional merge predicate consulted by add_entity when no case-folded
    // cui match exists; return an existing id to merge into, or -1.
    std::function<int(const KnowledgeGraph&, const Entity&)> merge_hook;

    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    // Internals kept public-ish for the free functions below.
    std::unordered_map<std::string, int> cui_index_;     // case-folded cui -> id
    std::unordered_map<uint64_t, int> triple_index_;     // packed key -> index
    bool frozen_ = false;
};

// Adds (or merges by case-folded cui) an entity; rec.id is ignored.
// Returns the id. On merge, alias lists are unioned case-folded; the first
// writer wins for definition/tui.
int add_entity(KnowledgeGraph& g, const Entity& rec);

// Adds a triple by entity ids. New keys get count = 1; re-adding an existing
// (head, tail, relation) increments its count. Returns the triple index.
int add_triple(KnowledgeGraph& g, int head_id, int tail_id, RelationType relation);

// Adds a vision token; validates label range, feature length against
// d_vision, and finiteness. Returns the token id.
int add_vision_token(KnowledgeGraph& g, int label_index, std::vector<double> feature,
                     const std::string& source_id);

GraphStats stats(const KnowledgeGraph& g);

// JSON Lines persistence. Line 1 is the header
// {"kind":"header","format":"m3kg","version":1,"d_vision":<int>}; entity
// records must precede the triples that reference them (by cui). Errors carry
// the offending 1-based line number.
void save(const KnowledgeGraph& g, const std::string& path);
KnowledgeGraph load(const std::string& path);

// Deep structural equality: ids, counts, and token features bit-identical.
bool graph_equal(const KnowledgeGraph& a, const KnowledgeGraph& b);

// Valid DOT digraph with at most max_nodes nodes, chosen by descending
// incident-triple count (ties by name ascending). Node labels are
// name(entity_type); edges are labeled by relation name and kept only when
// both endpoints were selected.
std::string export_dot(const KnowledgeGraph& g, int max_nodes);

} // namespace m3kg
