// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "m3kg/matrix.hpp"

namespace m3kg::ad {

using NodeId = int;

// Reverse-mode tape over dense matrices. Values are computed eagerly when an
// op is recorded; backward() walks the tape once in reverse and accumulates
// into parent gradients. All loops run in a fixed order, so repeated runs on
// equal inputs produce bit-identical values and gradients.
class Tape {
public:
    NodeId leaf(Mat value);
    NodeId leaf(double scalar);

    const Mat& val(NodeId id) const { return nodes_[id].value; }
    const Mat& grad(NodeId id) const { return nodes_[id].grad; }
    Mat& grad_mut(NodeId id) { return nodes_[id].grad; }

    // Seeds d(loss)/d(loss) = 1 (loss must be 1x1) and propagates.
    void backward(NodeId loss);

    size_t size() const { return nodes_.size(); }

    NodeId push(Mat value, std::function<void(Tape&, const Mat&)> back);

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Tape&, const Mat&)> back; // upstream grad of this node
    };
    std::vector<Node> nodes_;
};

// Boolean attention mask, row-major n_q x n_k; nonzero = position visible.
using Mask = std::vector<uint8_t>;

NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId matmul_nt(Tape& t, NodeId a, NodeId b); // a * b^T
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sum(Tape& t, const std::vector<NodeId>& xs);
NodeId scale(Tape& t, NodeId a, double c);
NodeId add_row_broadcast(Tape& t, NodeId a, NodeId row); // row is 1 x d
NodeId relu(Tape& t, NodeId a);
NodeId leaky_relu(Tape& t, NodeId a, double slope);
NodeId softmax_rows(Tape& t, NodeId a, const Mask* mask = nullptr);
NodeId concat_rows(Tape& t, const std::vector<NodeId>& parts);
NodeId slice_rows(Tape& t, NodeId a, int r0, int r1);
NodeId concat_cols(Tape& t, const std::vector<NodeId>& parts);
NodeId slice_cols(Tape& t, NodeId a, int c0, int c1);
NodeId gather_rows(Tape& t, NodeId a, std::vector<int> idx);
NodeId layer_norm_rows(Tape& t, NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);

// Directed message aggregation: out[dst[e]] += w[e] * x[src[e]] for each edge,
// in edge order. Backbone of the graph convolution layers.
NodeId edge_aggregate(Tape& t, NodeId x, std::vector<int> src, std::vector<int> dst,
                      std::vector<double> w, int n_out);

// Single-head additive attention over per-node neighborhoods (source row
// lists). Scores use score(j -> i) = leaky_relu(a_src . wh[j] + a_dst . wh[i]).
// `avec` is 1 x 2d: first half a_src, second half a_dst.
NodeId neighborhood_attention(Tape& t, NodeId wh, NodeId avec,
                              std::vector<std::vector<int>> neighborhoods, double slope);

// Mean negative log-softmax at the target ids over active rows; 1x1 output.
NodeId cross_entropy_mean(Tape& t, NodeId logits, std::vector<int> targets,
                          std::vector<uint8_t> active);

} // namespace m3kg::ad
