// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cctype>

#include "m3kg/errors.hpp"
#include "m3kg/node_encoder.hpp"
#include "m3kg/rng.hpp"
#include "testutil.hpp"

using namespace m3kg;

namespace {

// Independent FNV-1a-64 oracle: processes the buffer through explicit state
// updates written separately from the library routine.
uint64_t fnv_oracle(const std::string& s) {
    const uint64_t offset_basis = 0xcbf29ce484222325ULL;  // 14695981039346656037
    const uint64_t prime = 0x100000001b3ULL;              // 1099511628211
    uint64_t state = offset_basis;
    for (size_t i = 0; i < s.size(); ++i) {
        state = state ^ static_cast<unsigned char>(s[i]);
        state = state * prime;
    }
    return state;
}

Entity lung_entity() {
    Entity e;
    e.cui = "C0024109";
    e.name = "Lung";
    e.definition =
        "Either of the pair of organs occupying the cavity of the thorax that "
        "effect the aeration of the blood.";
    e.aliases = {"lung structure", "pulmones"};
    return e;
}

} // namespace

TEST_CASE("entity_text serializes fields in fixed order with preserved separators") {
    CHECK(entity_text(lung_entity()) ==
          "C0024109 | Lung | Either of the pair of organs occupying the cavity of the "
          "thorax that effect the aeration of the blood. |  | lung structure, pulmones");

    Entity minimal;
    minimal.cui = "X";
    minimal.name = "y";
    CHECK(entity_text(minimal) == "X | y |  |  | ");
}

TEST_CASE("alias order changes the serialized text") {
    Entity a = lung_entity();
    Entity b = lung_entity();
    std::swap(b.aliases[0], b.aliases[1]);
    CHECK(entity_text(a) != entity_text(b));
}

TEST_CASE("empty text embeds to a 0 x d matrix") {
    HashedEmbedder emb;
    Mat m = emb.embed_tokens("", 8);
    CHECK(m.rows == 0);
    CHECK(m.cols == 8);
}

TEST_CASE("repeated tokens give identical one-hot rows") {
    HashedEmbedder emb;
    Mat m = emb.embed_tokens("a a", 8);
    REQUIRE(m.rows == 2);
    for (int j = 0; j < 8; ++j) CHECK(m(0, j) == m(1, j));
    double s = 0.0;
    for (int j = 0; j < 8; ++j) s += m(0, j);
    CHECK(s == 1.0);
}

TEST_CASE("hot indices match the independent FNV-1a oracle") {
    HashedEmbedder emb;
    Mat m = emb.embed_tokens("lung effusion", 16);
    REQUIRE(m.rows == 2);
    const int i0 = static_cast<int>(fnv_oracle("lung") % 16);
    const int i1 = static_cast<int>(fnv_oracle("effusion") % 16);
    CHECK(m(0, i0) == 1.0);
    CHECK(m(1, i1) == 1.0);
    // Case folding: "LUNG Effusion" hashes to the same rows.
    Mat m2 = emb.embed_tokens("LUNG Effusion", 16);
    CHECK(bit_equal(m, m2));
}

TEST_CASE("hashed rows have exactly one nonzero entry equal to one") {
    HashedEmbedder emb;
    Rng rng(12);
    for (int it = 0; it < 20; ++it) {
        std::string text;
        const int n_tok = 1 + rng.below(6);
        for (int t = 0; t < n_tok; ++t) text += m3kg::test::random_word(rng, 5) + " ";
        Mat m = emb.embed_tokens(text, 32);
        REQUIRE(m.rows == n_tok);
        for (int i = 0; i < m.rows; ++i) {
            int nonzero = 0;
            for (int j = 0; j < m.cols; ++j) {
                if (m(i, j) != 0.0) {
                    ++nonzero;
                    CHECK(m(i, j) == 1.0);
                }
            }
            CHECK(nonzero == 1);
        }
    }
}

TEST_CASE("embed_tokens rejects d < 1") {
    HashedEmbedder emb;
    CHECK_THROWS_AS(emb.embed_tokens("x", 0), Error);
}

TEST_CASE("mean_pool arithmetic") {
    Mat one = Mat::from_rows({{1, 3}});
    Mat pooled = mean_pool(one);
    CHECK(pooled(0, 0) == 1.0);
    CHECK(pooled(0, 1) == 3.0);

    Mat two = Mat::from_rows({{1, 3}, {3, 5}});
    Mat p2 = mean_pool(two);
    CHECK(p2(0, 0) == 2.0);
    CHECK(p2(0, 1) == 4.0);

    Mat none(0, 5);
    Mat p3 = mean_pool(none);
    CHECK(p3.cols == 5);
    for (int j = 0; j < 5; ++j) CHECK(p3(0, j) == 0.0);
}

TEST_CASE("encode_nodes composes the three ops and matches recomputation") {
    Rng rng(21);
    KnowledgeGraph g = m3kg::test::make_random_graph(rng, 12);
    Subgraph sg = prune_to_budget(g, 8);
    HashedEmbedder emb;
    const int d = 16;
    NodeFeatureMatrix nf = encode_nodes(sg, g.entities, emb, d);
    REQUIRE(nf.values.rows == static_cast<int>(sg.node_ids.size()));
    CHECK(nf.node_ids == sg.node_ids);
    for (size_t i = 0; i < sg.node_ids.size(); ++i) {
        Mat expect = mean_pool(emb.embed_tokens(entity_text(g.entities[sg.node_ids[i]]), d));
        for (int j = 0; j < d; ++j)
            CHECK(nf.values(static_cast<int>(i), j) == expect(0, j));
    }
    // Determinism.
    NodeFeatureMatrix nf2 = encode_nodes(sg, g.entities, emb, d);
    CHECK(bit_equal(nf.values, nf2.values));
}

TEST_CASE("permuting node order permutes rows identically") {
    Rng rng(22);
    KnowledgeGraph g = m3kg::test::make_random_graph(rng, 10);
    Subgraph sg = prune_to_budget(g, 8);
    if (sg.node_ids.size() < 2) return;
    Subgraph perm = sg;
    std::reverse(perm.node_ids.begin(), perm.node_ids.end());
    HashedEmbedder emb;
    NodeFeatureMatrix a = encode_nodes(sg, g.entities, emb, 8);
    NodeFeatureMatrix b = encode_nodes(perm, g.entities, emb, 8);
    const int n = a.values.rows;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 8; ++j) CHECK(a.values(i, j) == b.values(n - 1 - i, j));
}

TEST_CASE("changing one entity's attributes changes only its row") {
    Rng rng(23);
    KnowledgeGraph g = m3kg::test::make_random_graph(rng, 10);
    Subgraph sg = prune_to_budget(g, 8);
    if (sg.node_ids.empty()) return;
    HashedEmbedder emb;
    NodeFeatureMatrix before = encode_nodes(sg, g.entities, emb, 8);
    std::vector<Entity> edited = g.entities;
    edited[sg.node_ids[0]].definition = "entirely new definition text";
    NodeFeatureMatrix after = encode_nodes(sg, edited, emb, 8);
    for (int i = 1; i < before.values.rows; ++i)
        for (int j = 0; j < 8; ++j) CHECK(before.values(i, j) == after.values(i, j));
}

TEST_CASE("unknown node id is rejected") {
    Subgraph sg;
    sg.node_ids = {3};
    std::vector<Entity> entities(2);
    HashedEmbedder emb;
    CHECK_THROWS_AS(encode_nodes(sg, entities, emb, 4), Error);
}

TEST_CASE("external embedder runs a command over stdin lines") {
    // Each input line becomes the row [token_count, 1].
    ExternalEmbedder emb("awk '{print NF, 1}'");
    Mat m = emb.embed_texts({"a b c", "x", "p q"}, 2);
    REQUIRE(m.rows == 3);
    CHECK(m(0, 0) == 3.0);
    CHECK(m(1, 0) == 1.0);
    CHECK(m(2, 0) == 2.0);
    for (int i = 0; i < 3; ++i) CHECK(m(i, 1) == 1.0);
}

TEST_CASE("external embedder rejects short rows") {
    ExternalEmbedder emb("awk '{print NF}'");
    CHECK_THROWS_AS(emb.embed_texts({"a b"}, 2), Error);
}

TEST_CASE("make_embedder selects providers by name") {
    CHECK(make_embedder("hashed", "") != nullptr);
    CHECK(make_embedder("external", "cat") != nullptr);
    CHECK_THROWS_AS(make_embedder("external", ""), Error);
    CHECK_THROWS_AS(make_embedder("bert", ""), Error);
}
