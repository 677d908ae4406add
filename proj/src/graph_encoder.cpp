// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/graph_encoder.hpp"

#include <algorithm>

#include "m3kg/errors.hpp"

namespace m3kg {
namespace {

void check_edges(const ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                 const std::vector<int>& et) {
    const int n = t.val(V).rows;
    if (ei.head.size() != ei.tail.size() || ei.head.size() != et.size())
        fail(Err::ShapeMismatch, "graph layer: edge tensor lengths disagree");
    for (size_t e = 0; e < ei.head.size(); ++e) {
        if (ei.head[e] < 0 || ei.head[e] >= n || ei.tail[e] < 0 || ei.tail[e] >= n)
            fail(Err::IndexOutOfRange, "graph layer: edge index out of range");
        if (et[e] < 0 || et[e] >= kNumRelations)
            fail(Err::IndexOutOfRange, "graph layer: relation code out of range");
    }
}

ad::NodeId activate(ad::Tape& t, ad::NodeId x, Activation act) {
    return act == Activation::relu ? ad::relu(t, x) : x;
}

// Builds the (src, dst) lists for relation code r; codes >= kNumRelations are
// the inverse relations (edges reversed).
void edges_for_relation(const EdgeIndex& ei, const std::vector<int>& et, int r,
                        std::vector<int>& src, std::vector<int>& dst) {
    src.clear();
    dst.clear();
    const bool inverse = r >= kNumRelations;
    const int code = inverse ? r - kNumRelations : r;
    for (size_t e = 0; e < et.size(); ++e) {
        if (et[e] != code) continue;
        src.push_back(inverse ? ei.tail[e] : ei.head[e]);
        dst.push_back(inverse ? ei.head[e] : ei.tail[e]);
    }
}

std::vector<double> mean_weights(const std::vector<int>& dst, int n) {
    std::vector<int> indeg(n, 0);
    for (int d : dst) indeg[d]++;
    std::vector<double> w(dst.size());
    for (size_t e = 0; e < dst.size(); ++e) w[e] = 1.0 / indeg[dst[e]];
    return w;
}

} // namespace

GraphVariant parse_graph_variant(const std::string& s) {
    if (s == "rgcn") return GraphVariant::rgcn;
    if (s == "gcn") return GraphVariant::gcn;
    if (s == "gat") return GraphVariant::gat;
    fail(Err::BadConfig, "unknown graph encoder variant: " + s);
}

std::string to_string(GraphVariant v) {
    switch (v) {
        case GraphVariant::rgcn: return "rgcn";
        case GraphVariant::gcn: return "gcn";
        case GraphVariant::gat: return "gat";
    }
    fail(Err::BadConfig, "corrupt graph variant value");
}

void GraphEncoderParams::init(int d_in, int d_hidden) {
    if (config.layers < 1) fail(Err::BadConfig, "graph encoder needs >= 1 layers");
    Rng rng(static_cast<uint64_t>(config.seed));
    layers.clear();
    for (int l = 0; l < config.layers; ++l) {
        const int din = l == 0 ? d_in : d_hidden;
        GraphLayerParams p;
        if (config.variant == GraphVariant::rgcn) {
            const int n_rel = config.add_inverse_relations ? 2 * kNumRelations : kNumRelations;
            for (int r = 0; r < n_rel; ++r) p.W_r.push_back(glorot(rng, din, d_hidden));
            p.W_0 = glorot(rng, din, d_hidden);
        } else if (config.variant == GraphVariant::gcn) {
            p.W_r.push_back(glorot(rng, din, d_hidden));
            p.W_0 = glorot(rng, din, d_hidden);
        } else {
            p.W_r.push_back(glorot(rng, din, d_hidden));
            p.a = glorot(rng, 1, 2 * d_hidden);
        }
        layers.push_back(std::move(p));
    }
}

GraphLayerBound bind(ad::Tape& t, const GraphLayerParams& p) {
    GraphLayerBound b;
    for (const Mat& w : p.W_r) b.W_r.push_back(t.leaf(w));
    if (!p.W_0.empty()) b.W_0 = t.leaf(p.W_0);
    if (!p.a.empty()) b.a = t.leaf(p.a);
    return b;
}

GraphEncoderBound bind(ad::Tape& t, const GraphEncoderParams& p) {
    GraphEncoderBound b;
    for (const auto& layer : p.layers) b.layers.push_back(bind(t, layer));
    return b;
}

ad::NodeId rgcn_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                      const std::vector<int>& et, const GraphLayerBound& p,
                      Activation act, bool add_inverse_relations) {
    using namespace ad;
    check_edges(t, V, ei, et);
    const int n = t.val(V).rows;
    const int n_rel = add_inverse_relations ? 2 * kNumRelations : kNumRelations;
    if (static_cast<int>(p.W_r.size()) < n_rel)
        fail(Err::ShapeMismatch, "rgcn_layer: missing relation weight matrices");

    std::vector<NodeId> terms = {matmul(t, V, p.W_0)};
    std::vector<int> src, dst;
    for (int r = 0; r < n_rel; ++r) {
        edges_for_relation(ei, et, r, src, dst);
        if (src.empty()) continue;
        terms.push_back(edge_aggregate(t, matmul(t, V, p.W_r[r]), src, dst,
                                       mean_weights(dst, n), n));
    }
    return activate(t, terms.size() == 1 ? terms[0] : sum(t, terms), act);
}

ad::NodeId gcn_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                     const std::vector<int>& et, const GraphLayerBound& p,
                     Activation act, bool add_inverse_relations) {
    using namespace ad;
    check_edges(t, V, ei, et);
    const int n = t.val(V).rows;

    std::vector<int> src = ei.head, dst = ei.tail;
    if (add_inverse_relations) {
        src.insert(src.end(), ei.tail.begin(), ei.tail.end());
        dst.insert(dst.end(), ei.head.begin(), ei.head.end());
    }
    NodeId self = matmul(t, V, p.W_0);
    if (src.empty()) return activate(t, self, act);
    NodeId agg = edge_aggregate(t, matmul(t, V, p.W_r[0]), src, dst,
                                mean_weights(dst, n), n);
    return activate(t, add(t, self, agg), act);
}

ad::NodeId gat_layer(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                     const std::vector<int>& et, const GraphLayerBound& p,
                     Activation act, bool add_inverse_relations) {
    using namespace ad;
    check_edges(t, V, ei, et);
    const int n = t.val(V).rows;

    // In-neighborhood as a set, plus the mandatory self-edge; sorted for a
    // fixed summation order.
    std::vector<std::vector<int>> nbs(n);
    for (int i = 0; i < n; ++i) nbs[i].push_back(i);
    for (size_t e = 0; e < ei.head.size(); ++e) {
        nbs[ei.tail[e]].push_back(ei.head[e]);
        if (add_inverse_relations) nbs[ei.head[e]].push_back(ei.tail[e]);
    }
    for (auto& nb : nbs) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    NodeId wh = matmul(t, V, p.W_r[0]);
    return activate(t, neighborhood_attention(t, wh, p.a, nbs, kGatLeakySlope), act);
}

ad::NodeId graph_forward(ad::Tape& t, ad::NodeId V, const EdgeIndex& ei,
                         const std::vector<int>& et, const GraphEncoderBound& b,
                         const GraphEncoderConfig& config) {
    if (b.layers.empty()) fail(Err::BadConfig, "graph_forward: no layers");
    ad::NodeId x = V;
    for (size_t l = 0; l < b.layers.size(); ++l) {
        const Activation act =
            l + 1 == b.layers.size() ? config.final_activation : Activation::relu;
        switch (config.variant) {
            case GraphVariant::rgcn:
                x = rgcn_layer(t, x, ei, et, b.layers[l], act, config.add_inverse_relations);
                break;
            case GraphVariant::gcn:
                x = gcn_layer(t, x, ei, et, b.layers[l], act, config.add_inverse_relations);
                break;
            case GraphVariant::gat:
                x = gat_layer(t, x, ei, et, b.layers[l], act, config.add_inverse_relations);
                break;
        }
    }
    return x;
}

} // namespace m3kg
