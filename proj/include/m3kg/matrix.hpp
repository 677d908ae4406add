// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace m3kg {

// Row-major dense matrix of doubles. All feature tensors in the pipeline
// (node matrices, patch features, logits, parameters) use this type.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool empty() const { return rows == 0 || cols == 0; }
    size_t size() const { return data.size(); }

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat identity(int n);
    static Mat from_rows(const std::vector<std::vector<double>>& rows);
};

// c += a * b
void mm_nn_acc(const Mat& a, const Mat& b, Mat& c);
// c += a * b^T
void mm_nt_acc(const Mat& a, const Mat& b, Mat& c);
// c += a^T * b
void mm_tn_acc(const Mat& a, const Mat& b, Mat& c);

Mat mm_nn(const Mat& a, const Mat& b);
Mat mm_nt(const Mat& a, const Mat& b);
Mat mm_tn(const Mat& a, const Mat& b);

Mat transpose(const Mat& a);
Mat concat_rows(const std::vector<const Mat*>& parts);

bool all_finite(const Mat& a);
double max_abs(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);
bool bit_equal(const Mat& a, const Mat& b);

} // namespace m3kg
