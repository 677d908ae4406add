// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#include "m3kg/matrix.hpp"

#include <cmath>
#include <cstring>

#include "m3kg/errors.hpp"

namespace m3kg {

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat Mat::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Mat();
    Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int r = 0; r < m.rows; ++r) {
        if (static_cast<int>(rows[r].size()) != m.cols)
            fail(Err::ShapeMismatch, "ragged row list");
        std::memcpy(m.row(r), rows[r].data(), sizeof(double) * m.cols);
    }
    return m;
}

// ikj order: the inner loop runs over contiguous rows of b and c.
void mm_nn_acc(const Mat& a, const Mat& b, Mat& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        fail(Err::ShapeMismatch, "mm_nn: incompatible shapes");
    const int n = a.rows, k = a.cols, m = b.cols;
    for (int i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
}

void mm_nt_acc(const Mat& a, const Mat& b, Mat& c) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        fail(Err::ShapeMismatch, "mm_nt: incompatible shapes");
    const int n = a.rows, k = a.cols, m = b.rows;
    for (int i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (int j = 0; j < m; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

void mm_tn_acc(const Mat& a, const Mat& b, Mat& c) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        fail(Err::ShapeMismatch, "mm_tn: incompatible shapes");
    const int n = a.cols, k = a.rows, m = b.cols;
    for (int p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (int i = 0; i < n; ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c.row(i);
            for (int j = 0; j < m; ++j) ci[j] += api * bp[j];
        }
    }
}

Mat mm_nn(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    mm_nn_acc(a, b, c);
    return c;
}

Mat mm_nt(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.rows);
    mm_nt_acc(a, b, c);
    return c;
}

Mat mm_tn(const Mat& a, const Mat& b) {
    Mat c(a.cols, b.cols);
    mm_tn_acc(a, b, c);
    return c;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

Mat concat_rows(const std::vector<const Mat*>& parts) {
    int cols = 0, rows = 0;
    for (const Mat* p : parts) {
        if (p->rows == 0) continue;
        if (cols == 0) cols = p->cols;
        else if (p->cols != cols) fail(Err::ShapeMismatch, "concat_rows: width mismatch");
        rows += p->rows;
    }
    Mat out(rows, cols);
    int r = 0;
    for (const Mat* p : parts) {
        for (int i = 0; i < p->rows; ++i, ++r)
            std::memcpy(out.row(r), p->row(i), sizeof(double) * cols);
    }
    return out;
}

bool all_finite(const Mat& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs(const Mat& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) fail(Err::ShapeMismatch, "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

bool bit_equal(const Mat& a, const Mat& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

} // namespace m3kg
