// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration: a flat `key = value` text format with `#`
// comments, a validated struct of training/model knobs, and an exact
// parse/render round trip.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace m3kg {

struct PipelineConfig {
    uint64_t seed = 0;
    int d = 64;       // graph/vision feature width
    int d_dec = 64;   // decoder width
    int heads = 4;
    std::vector<int> scale_budgets = {60, 120, 180, 240, 300};
    int final_scale_index = 4;  // scale used as the final graph representation
    int n_visual = 500;         // vision-token memory truncation
    double tau = 0.5;           // activation-map threshold
    std::string retrieval_query = "qformer";  // qformer | patches
    std::string use_rgcn_variant = "rgcn";    // rgcn | gcn | gat
    bool use_graph = true;       // graph path (both bridge streams) on/off
    bool use_multiscale = true;  // multi-scale fusion vs single final-budget scale
    bool use_dvg = true;         // disease-visual-graph retrieval stream on/off
    double lr = 9e-5;
    int steps = 2000;
    int batch = 8;
    int max_len = 64;

    bool operator==(const PipelineConfig&) const = default;
};

// Parses the flat text format; unknown keys, missing '=', and unparsable
// values raise BadConfig with the 1-based line number. Later occurrences of
// a key overwrite earlier ones.
PipelineConfig parse_config(const std::string& text);

// Renders every field as `key = value` lines; parse_config(render_config(c))
// reproduces c exactly (floats use shortest round-trip formatting).
std::string render_config(const PipelineConfig& c);

PipelineConfig load_config(const std::string& path);  // IoError on open failure

// Range/consistency checks (positive dims, head divisibility, strictly
// increasing budgets, valid variant names, tau in (0,1], ...); BadConfig.
void validate(const PipelineConfig& c);

} // namespace m3kg
