// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Relational graph convolution over subgraphs, plus non-relational GCN and
// attention-based GAT variants; all layers run on the autodiff tape so
// gradients are finite-difference verifiable.
#pragma once

#include <string>
#include <vector>

#include "m3kg/attention.hpp"
#include "m3kg/kg_sampler.hpp"
#include "m3kg/matrix.hpp"
#include "m3kg/rng.hpp"
#include "m3kg/tape.hpp"

namespace m3kg {

constexpr int kNumRelations = 3;
constexpr double kGatLeakySlope = 0.25;

enum class GraphVariant { rgcn, gcn, gat };
enum class Activation { relu, identity };

GraphVariant parse_graph_variant(const std::string& s);  // throws BadConfig
std::string to_string(GraphVariant v);

struct GraphLayerParams {
    // rgcn: one matrix per relation code (3, or 6 with inverses);
    // gcn/gat: the single shared W lives in W_r[0].
    std::vector<Mat> W_r;
    Mat W_0;    // self-loop transform (rgcn/gcn; unused by gat)
    Mat a;      // gat attention vector, 1 x 2*d_out; empty otherwise
};

struct GraphEncoderConfig {
    GraphVariant variant = GraphVariant::rgcn;
    int layers = 2;
    bool add_inverse_relations = false;
    // relu on all layers but the last; the last uses final_activation.
    Activation final_activation = Activation::identity;
    int seed = 0;
};

struct GraphEncoderParams {
    GraphEncoderConfig config;
    std::vector<GraphLayerParams> layers;
    // Layer 0 maps d_in -> d_hidden, later layers d_hidden -> d_hidden.
    void init(int d_in, int d_hidden);
};

struct GraphLayerBound {
    std::vector<ad::NodeId> W_r;
    ad::NodeId W_0 = -1;
    ad::NodeId a = -1;
};

struct GraphEncoderBound {
    std::vector<GraphLayerBound> layers;
};

GraphLayerBound bind(ad::Tape& t, const GraphLayerParams& p);
GraphEncoderBound bind(ad::Tape& t, const GraphEncoderParams& p);

// One relational layer: node i (tail) aggregates over incoming neighbors per
// relation with 1/|N_i^r| normalization, plus the W_0 self-loop term.
ad::NodeId rgcn_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                      const std::vector<int>& et, const GraphLayerBound& p,
                      Activation act, bool add_inverse_relations);

// Relation-blind variant: single shared W, in-neighbor mean over all edges.
ad::NodeId gcn_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                     const std::vector<int>& et, const GraphLayerBound& p,
                     Activation act, bool add_inverse_relations);

// Single-head additive attention over the in-neighborhood plus a mandatory
// self-edge: e_ij = leaky_relu([W h_j || W h_i] . a).
ad::NodeId gat_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                     const std::vector<int>& et, const GraphLayerBound& p,
                     Activation act, bool add_inverse_relations);

// Sequential application per config; dispatches on the variant.
ad::NodeId graph_forward(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                         const std::vector<int>& et, const GraphEncoderBound& b,
                         const GraphEncoderConfig& config);

} // namespace m3kg
