// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Serializes entity attributes to text and embeds them into a fixed-size
// node feature matrix via token embedding and mean pooling.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "m3kg/kg_sampler.hpp"
#include "m3kg/kg_store.hpp"
#include "m3kg/matrix.hpp"

namespace m3kg {

// Fixed field order CUI, Name, Definition, TUI, Aliases(comma-joined) with
// " | " separators; empty fields leave empty segments.
std::string entity_text(const Entity& e);

class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    // Returns one row per token (L x d); an empty text gives a 0 x d matrix.
    virtual Mat embed_tokens(const std::string& text, int d) const = 0;
    // Batched convenience: one pooled row per text. Overridable so external
    // providers can amortize process startup.
    virtual Mat embed_texts(const std::vector<std::string>& texts, int d) const;
};

// Deterministic default: case-folds and whitespace-tokenizes the text, then
// maps token t to a one-hot row at FNV-1a-64(UTF-8 bytes of t) mod d.
class HashedEmbedder final : public TextEmbedder {
  public:
    Mat embed_tokens(const std::string& text, int d) const override;
};

// Plug-in provider: runs `command` with entity texts on stdin (one per line)
// and reads one row of whitespace-separated floats per input line.
class ExternalEmbedder final : public TextEmbedder {
  public:
    explicit ExternalEmbedder(std::string command) : command_(std::move(command)) {}
    Mat embed_tokens(const std::string& text, int d) const override;
    Mat embed_texts(const std::vector<std::string>& texts, int d) const override;

  private:
    std::string command_;
};

uint64_t fnv1a64(const std::string& bytes);

// Column-wise arithmetic mean; a 0 x d input pools to the zero vector.
Mat mean_pool(const Mat& tokens);

struct NodeFeatureMatrix {
    Mat values;                 // n x d
    std::vector<int> node_ids;  // matches subgraph order
};

NodeFeatureMatrix encode_nodes(const Subgraph& sg, const std::vector<Entity>& entities,
                               const TextEmbedder& embedder, int d);

std::unique_ptr<TextEmbedder> make_embedder(const std::string& kind,
                                            const std::string& external_cmd);

} // namespace m3kg
