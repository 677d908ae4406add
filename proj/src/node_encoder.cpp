// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/node_encoder.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "m3kg/errors.hpp"

namespace m3kg {
namespace {

std::string fold_text(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
    std::vector<std::string> toks;
    std::istringstream in(s);
    std::string t;
    while (in >> t) toks.push_back(t);
    return toks;
}

std::string one_line(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == '\n' || c == '\r') c = ' ';
    return out;
}

} // namespace

std::string entity_text(const Entity& e) {
    std::string aliases;
    for (size_t i = 0; i < e.aliases.size(); ++i) {
        if (i) aliases += ", ";
        aliases += e.aliases[i];
    }
    return e.cui + " | " + e.name + " | " + e.definition + " | " + e.tui + " | " + aliases;
}

uint64_t fnv1a64(const std::string& bytes) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Mat TextEmbedder::embed_texts(const std::vector<std::string>& texts, int d) const {
    Mat out(static_cast<int>(texts.size()), d);
    for (size_t i = 0; i < texts.size(); ++i) {
        Mat pooled = mean_pool(embed_tokens(texts[i], d));
        for (int j = 0; j < d; ++j) out(static_cast<int>(i), j) = pooled(0, j);
    }
    return out;
}

Mat HashedEmbedder::embed_tokens(const std::string& text, int d) const {
    if (d < 1) fail(Err::BadDim, "embed_tokens: d must be >= 1");
    const std::vector<std::string> toks = whitespace_tokens(fold_text(text));
    Mat out(static_cast<int>(toks.size()), d);
    for (size_t i = 0; i < toks.size(); ++i)
        out(static_cast<int>(i), static_cast<int>(fnv1a64(toks[i]) % d)) = 1.0;
    return out;
}

Mat ExternalEmbedder::embed_texts(const std::vector<std::string>& texts, int d) const {
    if (d < 1) fail(Err::BadDim, "embed_texts: d must be >= 1");
    Mat out(static_cast<int>(texts.size()), d);
    if (texts.empty()) return out;

    const std::string tmp =
        (std::filesystem::temp_directory_path() /
         ("m3kg_embed_" + std::to_string(fnv1a64(texts[0]) % 100000) + "_" +
          std::to_string(texts.size()) + ".txt"))
            .string();
    {
        std::ofstream f(tmp, std::ios::binary);
        for (const auto& t : texts) f << one_line(t) << "\n";
    }
    const std::string cmd = command_ + " < " + tmp;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) fail(Err::IoError, "external embedder: cannot run " + command_);
    std::string output;
    char buf[4096];
    size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
    const int status = pclose(pipe);
    std::filesystem::remove(tmp);
    if (status != 0)
        fail(Err::IoError, "external embedder exited with status " + std::to_string(status));

    std::istringstream lines(output);
    std::string line;
    int row = 0;
    while (std::getline(lines, line)) {
        if (row >= out.rows) fail(Err::ShapeMismatch, "external embedder: too many rows");
        std::istringstream vals(line);
        for (int j = 0; j < d; ++j)
            if (!(vals >> out(row, j)))
                fail(Err::ShapeMismatch, "external embedder: row " + std::to_string(row) +
                                             " has fewer than " + std::to_string(d) + " values");
        ++row;
    }
    if (row != out.rows)
        fail(Err::ShapeMismatch, "external embedder: expected " + std::to_string(out.rows) +
                                     " rows, got " + std::to_string(row));
    return out;
}

Mat ExternalEmbedder::embed_tokens(const std::string& text, int d) const {
    // The external contract is one pooled row per text line.
    return embed_texts({text}, d);
}

Mat mean_pool(const Mat& tokens) {
    Mat out(1, tokens.cols);
    if (tokens.rows == 0) return out;
    for (int i = 0; i < tokens.rows; ++i)
        for (int j = 0; j < tokens.cols; ++j) out(0, j) += tokens(i, j);
    for (int j = 0; j < tokens.cols; ++j) out(0, j) /= tokens.rows;
    return out;
}

NodeFeatureMatrix encode_nodes(const Subgraph& sg, const std::vector<Entity>& entities,
                               const TextEmbedder& embedder, int d) {
    std::vector<std::string> texts;
    texts.reserve(sg.node_ids.size());
    for (int id : sg.node_ids) {
        if (id < 0 || id >= static_cast<int>(entities.size()))
            fail(Err::UnknownEntity, "encode_nodes: unknown entity id " + std::to_string(id));
        texts.push_back(entity_text(entities[id]));
    }
    NodeFeatureMatrix nf;
    nf.values = embedder.embed_texts(texts, d);
    nf.node_ids = sg.node_ids;
    if (!all_finite(nf.values)) fail(Err::BadDim, "encode_nodes: non-finite embedding");
    return nf;
}

std::unique_ptr<TextEmbedder> make_embedder(const std::string& kind,
                                            const std::string& external_cmd) {
    if (kind == "hashed") return std::make_unique<HashedEmbedder>();
    if (kind == "external") {
        if (external_cmd.empty())
            fail(Err::BadConfig, "external embedder requires embedder_cmd");
        return std::make_unique<ExternalEmbedder>(external_cmd);
    }
    fail(Err::BadConfig, "unknown embedder kind: " + kind);
}

} // namespace m3kg
