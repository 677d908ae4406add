// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking against tape backward passes.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "m3kg/matrix.hpp"
#include "m3kg/tape.hpp"

namespace m3kg::test {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    int worst_input = -1;   // index into `inputs` of the worst entry
    int worst_entry = -1;   // flat index within that input
    double worst_fd = 0.0;
    double worst_an = 0.0;
    bool ok(double tol = 1e-6) const { return checked > 0 && max_rel_err < tol; }
};

// Builds the graph via `make_loss` (which must register every Mat in `inputs`
// as tape leaves, in order, and return a scalar loss node), runs backward, and
// compares each input gradient entry against a central finite difference.
// `floor` keeps the relative-error denominator away from zero; deep
// compositions should raise it toward the typical gradient magnitude so
// finite-difference cancellation noise on near-zero entries is judged on an
// absolute scale instead of being inflated by a tiny denominator.
inline GradCheckResult grad_check(
    std::vector<Mat> inputs,
    const std::function<ad::NodeId(ad::Tape&, const std::vector<ad::NodeId>&)>& make_loss,
    double h = 1e-5, double floor = 1e-8) {
    using namespace m3kg::ad;
    auto eval = [&](const std::vector<Mat>& xs, std::vector<Mat>* grads) {
        Tape t;
        std::vector<NodeId> ids;
        ids.reserve(xs.size());
        for (const Mat& x : xs) ids.push_back(t.leaf(x));
        NodeId loss = make_loss(t, ids);
        double v = t.val(loss)(0, 0);
        if (grads) {
            t.backward(loss);
            grads->clear();
            for (NodeId id : ids) grads->push_back(t.grad(id));
        }
        return v;
    };

    std::vector<Mat> analytic;
    eval(inputs, &analytic);

    GradCheckResult res;
    for (size_t k = 0; k < inputs.size(); ++k) {
        for (size_t i = 0; i < inputs[k].data.size(); ++i) {
            const double orig = inputs[k].data[i];
            inputs[k].data[i] = orig + h;
            const double up = eval(inputs, nullptr);
            inputs[k].data[i] = orig - h;
            const double dn = eval(inputs, nullptr);
            inputs[k].data[i] = orig;
            const double fd = (up - dn) / (2.0 * h);
            const double an = analytic[k].data[i];
            const double denom = std::max({std::fabs(fd), std::fabs(an), floor});
            const double rel = std::fabs(fd - an) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_input = static_cast<int>(k);
                res.worst_entry = static_cast<int>(i);
                res.worst_fd = fd;
                res.worst_an = an;
            }
            ++res.checked;
        }
    }
    return res;
}

} // namespace m3kg::test
