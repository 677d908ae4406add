// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic corpus: per-disease geometric patterns rendered into
// images, templated reports describing them, the knowledge-graph triples
// implied by the templates, per-disease activation maps, and seeded vision
// tokens — all tied to one ground truth so every pipeline pathway is
// testable end to end.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "m3kg/eval_metrics.hpp"
#include "m3kg/kg_store.hpp"
#include "m3kg/matrix.hpp"

namespace m3kg {

struct SynthSpec {
    uint64_t seed = 0;
    int n_pairs = 32;
    int grid = 32;       // image side; multiple of 8, at least 32
    int n_diseases = 3;  // first n catalog entries are drawn from; <= 13
    int d_vision = 64;   // width of emitted vision-token features
};

struct SynthPair {
    std::string id;       // "img_0000" style, used as PGM stem and source_id
    Mat image;            // grid x grid in [0,1], values on the /255 lattice
    std::string report;   // non-empty
    LabelVector gold_labels;
    std::vector<std::pair<int, Mat>> activation_maps;  // (label, grid x grid)
};

struct SynthCorpus {
    SynthSpec spec;
    std::vector<SynthPair> pairs;
    KnowledgeGraph kg;
};

// Catalog row for one disease: its sentence fragments and pattern cell.
struct DiseaseTemplate {
    int label;               // index into kLabelNames
    const char* modifier;    // nullptr when the finding is unmodified
    const char* finding;
    const char* anatomy;
    const char* suggestive;  // nullptr when no suggestive_of sentence
    int intensity_byte;      // pattern gray level (exact PGM byte)
};

// The 13 supported diseases in label order (labels 1..13).
const std::vector<DiseaseTemplate>& disease_catalog();

// The sentence block a template contributes to a report.
std::string disease_sentence(const DiseaseTemplate& t);

// Draws up to three distinct catalog diseases per pair, renders their
// patterns into the image, writes one activation map per drawn disease
// (1 inside the pattern cell, 0 outside), emits the report sentences in
// label order ("no acute findings." when none drawn), accumulates the
// implied triples into the KG with per-occurrence counts, and adds one
// seeded vision token per occurrence. Fully deterministic in spec.seed.
SynthCorpus synth_corpus(const SynthSpec& spec);  // BadParams on bad spec

// Directory layout: manifest.json, pairs.jsonl, kg.jsonl, <id>.pgm images
// and act_<id>_<label> activation maps. Same corpus -> byte-identical files.
void write_corpus(const SynthCorpus& c, const std::string& dir);

struct LoadedCorpus {
    std::vector<SynthPair> pairs;
    KnowledgeGraph kg;
    int grid = 0;
};

// Reads the directory back; malformed manifest/pairs lines raise ParseError
// with the 1-based line number, missing files IoError. Pixels round-trip
// bit-exactly because generation stays on the /255 lattice.
LoadedCorpus load_corpus(const std::string& dir);

} // namespace m3kg
