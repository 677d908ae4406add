// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <utility>

#include "m3kg/errors.hpp"

namespace m3kg::ad {

NodeId Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

NodeId Tape::leaf(double scalar) {
    Mat m(1, 1);
    m(0, 0) = scalar;
    return push(std::move(m), nullptr);
}

NodeId Tape::push(Mat value, std::function<void(Tape&, const Mat&)> back) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::backward(NodeId loss) {
    if (nodes_[loss].value.rows != 1 || nodes_[loss].value.cols != 1)
        fail(Err::ShapeMismatch, "backward: loss must be scalar");
    for (auto& n : nodes_) n.grad = Mat(n.value.rows, n.value.cols);
    nodes_[loss].grad(0, 0) = 1.0;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
        if (nodes_[id].back) nodes_[id].back(*this, nodes_[id].grad);
    }
}

NodeId matmul(Tape& t, NodeId a, NodeId b) {
    Mat v = mm_nn(t.val(a), t.val(b));
    return t.push(std::move(v), [a, b](Tape& tp, const Mat& g) {
        mm_nt_acc(g, tp.val(b), tp.grad_mut(a)); // dA += G * B^T
        mm_tn_acc(tp.val(a), g, tp.grad_mut(b)); // dB += A^T * G
    });
}

NodeId matmul_nt(Tape& t, NodeId a, NodeId b) {
    Mat v = mm_nt(t.val(a), t.val(b));
    return t.push(std::move(v), [a, b](Tape& tp, const Mat& g) {
        mm_nn_acc(g, tp.val(b), tp.grad_mut(a)); // dA += G * B
        mm_tn_acc(g, tp.val(a), tp.grad_mut(b)); // dB += G^T * A
    });
}

NodeId add(Tape& t, NodeId a, NodeId b) {
    const Mat& av = t.val(a);
    const Mat& bv = t.val(b);
    if (!av.same_shape(bv)) fail(Err::ShapeMismatch, "add: shape mismatch");
    Mat v = av;
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] += bv.data[i];
    return t.push(std::move(v), [a, b](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        Mat& gb = tp.grad_mut(b);
        for (size_t i = 0; i < g.data.size(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] += g.data[i];
        }
    });
}

NodeId sum(Tape& t, const std::vector<NodeId>& xs) {
    if (xs.empty()) fail(Err::EmptyInput, "sum: no terms");
    Mat v = t.val(xs[0]);
    for (size_t k = 1; k < xs.size(); ++k) {
        const Mat& x = t.val(xs[k]);
        if (!x.same_shape(v)) fail(Err::ShapeMismatch, "sum: shape mismatch");
        for (size_t i = 0; i < v.data.size(); ++i) v.data[i] += x.data[i];
    }
    auto ids = xs;
    return t.push(std::move(v), [ids](Tape& tp, const Mat& g) {
        for (NodeId x : ids) {
            Mat& gx = tp.grad_mut(x);
            for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
        }
    });
}

NodeId scale(Tape& t, NodeId a, double c) {
    Mat v = t.val(a);
    for (double& x : v.data) x *= c;
    return t.push(std::move(v), [a, c](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
}

NodeId add_row_broadcast(Tape& t, NodeId a, NodeId row) {
    const Mat& av = t.val(a);
    const Mat& rv = t.val(row);
    if (rv.rows != 1 || rv.cols != av.cols)
        fail(Err::ShapeMismatch, "add_row_broadcast: row must be 1 x cols");
    Mat v = av;
    for (int i = 0; i < v.rows; ++i) {
        double* vi = v.row(i);
        for (int j = 0; j < v.cols; ++j) vi[j] += rv.data[j];
    }
    return t.push(std::move(v), [a, row](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        Mat& gr = tp.grad_mut(row);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        for (int i = 0; i < g.rows; ++i) {
            const double* gi = g.row(i);
            for (int j = 0; j < g.cols; ++j) gr.data[j] += gi[j];
        }
    });
}

NodeId relu(Tape& t, NodeId a) {
    Mat v = t.val(a);
    for (double& x : v.data) x = x > 0.0 ? x : 0.0;
    return t.push(std::move(v), [a](Tape& tp, const Mat& g) {
        const Mat& x = tp.val(a);
        Mat& ga = tp.grad_mut(a);
        for (size_t i = 0; i < g.data.size(); ++i)
            if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    });
}

NodeId leaky_relu(Tape& t, NodeId a, double slope) {
    Mat v = t.val(a);
    for (double& x : v.data) x = x > 0.0 ? x : slope * x;
    return t.push(std::move(v), [a, slope](Tape& tp, const Mat& g) {
        const Mat& x = tp.val(a);
        Mat& ga = tp.grad_mut(a);
        for (size_t i = 0; i < g.data.size(); ++i)
            ga.data[i] += (x.data[i] > 0.0 ? 1.0 : slope) * g.data[i];
    });
}

NodeId softmax_rows(Tape& t, NodeId a, const Mask* mask) {
    const Mat& x = t.val(a);
    if (mask && static_cast<int>(mask->size()) != x.rows * x.cols)
        fail(Err::ShapeMismatch, "softmax_rows: mask size mismatch");
    Mat y(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        const uint8_t* mi = mask ? mask->data() + static_cast<size_t>(i) * x.cols : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < x.cols; ++j)
            if (!mi || mi[j]) mx = std::max(mx, xi[j]);
        if (mx == -std::numeric_limits<double>::infinity())
            fail(Err::EmptyInput, "softmax_rows: fully masked row");
        double z = 0.0;
        double* yi = y.row(i);
        for (int j = 0; j < x.cols; ++j) {
            yi[j] = (!mi || mi[j]) ? std::exp(xi[j] - mx) : 0.0;
            z += yi[j];
        }
        for (int j = 0; j < x.cols; ++j) yi[j] /= z;
    }
    Mat ycopy = y;
    return t.push(std::move(y), [a, ycopy](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        for (int i = 0; i < g.rows; ++i) {
            const double* yi = ycopy.row(i);
            const double* gi = g.row(i);
            double dot = 0.0;
            for (int j = 0; j < g.cols; ++j) dot += gi[j] * yi[j];
            double* gai = ga.row(i);
            for (int j = 0; j < g.cols; ++j) gai[j] += yi[j] * (gi[j] - dot);
        }
    });
}

NodeId concat_rows(Tape& t, const std::vector<NodeId>& parts) {
    std::vector<const Mat*> vs;
    vs.reserve(parts.size());
    for (NodeId p : parts) vs.push_back(&t.val(p));
    Mat v = m3kg::concat_rows(vs);
    auto ids = parts;
    return t.push(std::move(v), [ids](Tape& tp, const Mat& g) {
        int r = 0;
        for (NodeId p : ids) {
            Mat& gp = tp.grad_mut(p);
            for (int i = 0; i < gp.rows; ++i, ++r)
                for (int j = 0; j < gp.cols; ++j) gp(i, j) += g(r, j);
        }
    });
}

NodeId slice_rows(Tape& t, NodeId a, int r0, int r1) {
    const Mat& x = t.val(a);
    if (r0 < 0 || r1 < r0 || r1 > x.rows) fail(Err::IndexOutOfRange, "slice_rows: bad range");
    Mat v(r1 - r0, x.cols);
    for (int i = r0; i < r1; ++i)
        std::memcpy(v.row(i - r0), x.row(i), sizeof(double) * x.cols);
    return t.push(std::move(v), [a, r0](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) ga(r0 + i, j) += g(i, j);
    });
}

NodeId concat_cols(Tape& t, const std::vector<NodeId>& parts) {
    if (parts.empty()) fail(Err::EmptyInput, "concat_cols: no parts");
    int rows = t.val(parts[0]).rows, cols = 0;
    for (NodeId p : parts) {
        if (t.val(p).rows != rows) fail(Err::ShapeMismatch, "concat_cols: row mismatch");
        cols += t.val(p).cols;
    }
    Mat v(rows, cols);
    int c = 0;
    for (NodeId p : parts) {
        const Mat& x = t.val(p);
        for (int i = 0; i < rows; ++i)
            std::memcpy(v.row(i) + c, x.row(i), sizeof(double) * x.cols);
        c += x.cols;
    }
    auto ids = parts;
    return t.push(std::move(v), [ids](Tape& tp, const Mat& g) {
        int c = 0;
        for (NodeId p : ids) {
            Mat& gp = tp.grad_mut(p);
            for (int i = 0; i < gp.rows; ++i)
                for (int j = 0; j < gp.cols; ++j) gp(i, j) += g(i, c + j);
            c += gp.cols;
        }
    });
}

NodeId slice_cols(Tape& t, NodeId a, int c0, int c1) {
    const Mat& x = t.val(a);
    if (c0 < 0 || c1 < c0 || c1 > x.cols) fail(Err::IndexOutOfRange, "slice_cols: bad range");
    Mat v(x.rows, c1 - c0);
    for (int i = 0; i < x.rows; ++i)
        std::memcpy(v.row(i), x.row(i) + c0, sizeof(double) * (c1 - c0));
    return t.push(std::move(v), [a, c0](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) ga(i, c0 + j) += g(i, j);
    });
}

NodeId gather_rows(Tape& t, NodeId a, std::vector<int> idx) {
    const Mat& x = t.val(a);
    Mat v(static_cast<int>(idx.size()), x.cols);
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= x.rows) fail(Err::IndexOutOfRange, "gather_rows: bad index");
        std::memcpy(v.row(static_cast<int>(k)), x.row(idx[k]), sizeof(double) * x.cols);
    }
    return t.push(std::move(v), [a, idx = std::move(idx)](Tape& tp, const Mat& g) {
        Mat& ga = tp.grad_mut(a);
        for (size_t k = 0; k < idx.size(); ++k) {
            const double* gk = g.row(static_cast<int>(k));
            double* gr = ga.row(idx[k]);
            for (int j = 0; j < g.cols; ++j) gr[j] += gk[j];
        }
    });
}

NodeId layer_norm_rows(Tape& t, NodeId x, NodeId gain, NodeId bias, double eps) {
    const Mat& xv = t.val(x);
    const Mat& gv = t.val(gain);
    const Mat& bv = t.val(bias);
    if (gv.rows != 1 || bv.rows != 1 || gv.cols != xv.cols || bv.cols != xv.cols)
        fail(Err::ShapeMismatch, "layer_norm_rows: gain/bias must be 1 x cols");
    const int d = xv.cols;
    Mat y(xv.rows, d);
    Mat xhat(xv.rows, d);
    std::vector<double> inv_sigma(xv.rows);
    for (int i = 0; i < xv.rows; ++i) {
        const double* xi = xv.row(i);
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[i] = is;
        double* xh = xhat.row(i);
        double* yi = y.row(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * is;
            yi[j] = xh[j] * gv.data[j] + bv.data[j];
        }
    }
    return t.push(std::move(y),
                  [x, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                      Tape& tp, const Mat& g) {
        const Mat& gv = tp.val(gain);
        Mat& gx = tp.grad_mut(x);
        Mat& gg = tp.grad_mut(gain);
        Mat& gb = tp.grad_mut(bias);
        const int d = g.cols;
        for (int i = 0; i < g.rows; ++i) {
            const double* gi = g.row(i);
            const double* xh = xhat.row(i);
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int j = 0; j < d; ++j) {
                const double dxhat = gi[j] * gv.data[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xh[j];
                gg.data[j] += gi[j] * xh[j];
                gb.data[j] += gi[j];
            }
            double* gxi = gx.row(i);
            const double is = inv_sigma[i];
            for (int j = 0; j < d; ++j) {
                const double dxhat = gi[j] * gv.data[j];
                gxi[j] += is * (dxhat - sum_dxhat / d - xh[j] * sum_dxhat_xhat / d);
            }
        }
    });
}

NodeId edge_aggregate(Tape& t, NodeId x, std::vector<int> src, std::vector<int> dst,
                      std::vector<double> w, int n_out) {
    const Mat& xv = t.val(x);
    if (src.size() != dst.size() || src.size() != w.size())
        fail(Err::ShapeMismatch, "edge_aggregate: edge arrays disagree");
    Mat v(n_out, xv.cols);
    for (size_t e = 0; e < src.size(); ++e) {
        if (src[e] < 0 || src[e] >= xv.rows || dst[e] < 0 || dst[e] >= n_out)
            fail(Err::IndexOutOfRange, "edge_aggregate: edge index out of range");
        const double* xs = xv.row(src[e]);
        double* vd = v.row(dst[e]);
        for (int j = 0; j < xv.cols; ++j) vd[j] += w[e] * xs[j];
    }
    return t.push(std::move(v), [x, src = std::move(src), dst = std::move(dst),
                                 w = std::move(w)](Tape& tp, const Mat& g) {
        Mat& gx = tp.grad_mut(x);
        for (size_t e = 0; e < src.size(); ++e) {
            const double* gd = g.row(dst[e]);
            double* gs = gx.row(src[e]);
            for (int j = 0; j < g.cols; ++j) gs[j] += w[e] * gd[j];
        }
    });
}

NodeId neighborhood_attention(Tape& t, NodeId wh, NodeId avec,
                              std::vector<std::vector<int>> neighborhoods, double slope) {
    const Mat& h = t.val(wh);
    const Mat& a = t.val(avec);
    const int d = h.cols;
    if (a.rows != 1 || a.cols != 2 * d)
        fail(Err::ShapeMismatch, "neighborhood_attention: avec must be 1 x 2d");
    const int n = static_cast<int>(neighborhoods.size());
    const double* a_src = a.data.data();
    const double* a_dst = a.data.data() + d;

    Mat out(n, d);
    std::vector<std::vector<double>> zs(n), alphas(n);
    for (int i = 0; i < n; ++i) {
        const auto& nb = neighborhoods[i];
        if (nb.empty()) fail(Err::EmptyInput, "neighborhood_attention: empty neighborhood");
        double dst_score = 0.0;
        for (int j = 0; j < d; ++j) dst_score += a_dst[j] * h(i, j);
        std::vector<double> z(nb.size()), s(nb.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < nb.size(); ++k) {
            double src_score = 0.0;
            const double* hj = h.row(nb[k]);
            for (int j = 0; j < d; ++j) src_score += a_src[j] * hj[j];
            z[k] = src_score + dst_score;
            s[k] = z[k] > 0.0 ? z[k] : slope * z[k];
            mx = std::max(mx, s[k]);
        }
        std::vector<double> alpha(nb.size());
        double zsum = 0.0;
        for (size_t k = 0; k < nb.size(); ++k) {
            alpha[k] = std::exp(s[k] - mx);
            zsum += alpha[k];
        }
        double* oi = out.row(i);
        for (size_t k = 0; k < nb.size(); ++k) {
            alpha[k] /= zsum;
            const double* hj = h.row(nb[k]);
            for (int j = 0; j < d; ++j) oi[j] += alpha[k] * hj[j];
        }
        zs[i] = std::move(z);
        alphas[i] = std::move(alpha);
    }
    return t.push(std::move(out),
                  [wh, avec, nbs = std::move(neighborhoods), zs = std::move(zs),
                   alphas = std::move(alphas), slope](Tape& tp, const Mat& g) {
        const Mat& h = tp.val(wh);
        const Mat& a = tp.val(avec);
        const int d = h.cols;
        const double* a_src = a.data.data();
        const double* a_dst = a.data.data() + d;
        Mat& gh = tp.grad_mut(wh);
        Mat& ga = tp.grad_mut(avec);
        for (size_t i = 0; i < nbs.size(); ++i) {
            const auto& nb = nbs[i];
            const auto& alpha = alphas[i];
            const auto& z = zs[i];
            const double* gi = g.row(static_cast<int>(i));
            // d(out_i)/d(alpha_k) = g . h[nb[k]]; softmax jacobian back to scores
            std::vector<double> dalpha(nb.size());
            double dot = 0.0;
            for (size_t k = 0; k < nb.size(); ++k) {
                double v = 0.0;
                const double* hj = h.row(nb[k]);
                for (int j = 0; j < d; ++j) v += gi[j] * hj[j];
                dalpha[k] = v;
                dot += alpha[k] * v;
            }
            double dz_sum = 0.0;
            for (size_t k = 0; k < nb.size(); ++k) {
                const double ds = alpha[k] * (dalpha[k] - dot);
                const double dz = ds * (z[k] > 0.0 ? 1.0 : slope);
                dz_sum += dz;
                const double* hj = h.row(nb[k]);
                double* ghj = gh.row(nb[k]);
                for (int j = 0; j < d; ++j) {
                    ga.data[j] += dz * hj[j];        // a_src part
                    ghj[j] += dz * a_src[j] + alpha[k] * gi[j];
                }
            }
            const double* hi = h.row(static_cast<int>(i));
            double* ghi = gh.row(static_cast<int>(i));
            for (int j = 0; j < d; ++j) {
                ga.data[d + j] += dz_sum * hi[j];    // a_dst part
                ghi[j] += dz_sum * a_dst[j];
            }
        }
    });
}

NodeId cross_entropy_mean(Tape& t, NodeId logits, std::vector<int> targets,
                          std::vector<uint8_t> active) {
    const Mat& x = t.val(logits);
    if (static_cast<int>(targets.size()) != x.rows || active.size() != targets.size())
        fail(Err::LengthMismatch, "cross_entropy_mean: row/target count mismatch");
    int n_active = 0;
    for (uint8_t a : active) n_active += a ? 1 : 0;
    if (n_active == 0) fail(Err::EmptyInput, "cross_entropy_mean: no active positions");

    Mat probs(x.rows, x.cols);
    double loss = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        const double* xi = x.row(i);
        double mx = xi[0];
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, xi[j]);
        double z = 0.0;
        double* pi = probs.row(i);
        for (int j = 0; j < x.cols; ++j) {
            pi[j] = std::exp(xi[j] - mx);
            z += pi[j];
        }
        for (int j = 0; j < x.cols; ++j) pi[j] /= z;
        if (active[i]) {
            if (targets[i] < 0 || targets[i] >= x.cols)
                fail(Err::IndexOutOfRange, "cross_entropy_mean: target id out of range");
            loss -= std::log(pi[targets[i]]);
        }
    }
    Mat v(1, 1);
    v(0, 0) = loss / n_active;
    return t.push(std::move(v),
                  [logits, targets = std::move(targets), active = std::move(active),
                   probs = std::move(probs), n_active](Tape& tp, const Mat& g) {
        const double gs = g(0, 0) / n_active;
        Mat& gl = tp.grad_mut(logits);
        for (int i = 0; i < gl.rows; ++i) {
            if (!active[i]) continue;
            const double* pi = probs.row(i);
            double* gi = gl.row(i);
            for (int j = 0; j < gl.cols; ++j) gi[j] += gs * pi[j];
            gi[targets[i]] -= gs;
        }
    });
}

} // namespace m3kg::ad
