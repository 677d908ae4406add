// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Adam with decoupled weight decay. Moment buffers are keyed by parameter
// position, so the caller must pass the same parameter list every step.
#pragma once

#include <cmath>
#include <vector>

#include "m3kg/errors.hpp"
#include "m3kg/matrix.hpp"

namespace m3kg {

struct AdamW {
    double lr = 9e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    int t = 0;
    std::vector<Mat> m, v;

    void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
        if (params.size() != grads.size())
            fail(Err::LengthMismatch, "adamw: params/grads size mismatch");
        if (m.empty()) {
            for (Mat* p : params) {
                m.emplace_back(p->rows, p->cols);
                v.emplace_back(p->rows, p->cols);
            }
        }
        if (m.size() != params.size())
            fail(Err::LengthMismatch, "adamw: parameter list changed between steps");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (size_t k = 0; k < params.size(); ++k) {
            Mat& p = *params[k];
            const Mat& g = *grads[k];
            if (!p.same_shape(g) || !p.same_shape(m[k]))
                fail(Err::ShapeMismatch, "adamw: parameter/gradient shape mismatch");
            for (size_t i = 0; i < p.data.size(); ++i) {
                m[k].data[i] = beta1 * m[k].data[i] + (1.0 - beta1) * g.data[i];
                v[k].data[i] = beta2 * v[k].data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
                const double mhat = m[k].data[i] / bc1;
                const double vhat = v[k].data[i] / bc2;
                p.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.data[i]);
            }
        }
    }
};

} // namespace m3kg
