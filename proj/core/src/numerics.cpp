// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mora {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::AllMasked: return "AllMasked";
        case ErrorCode::InvalidBudget: return "InvalidBudget";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::WrongMode: return "WrongMode";
        case ErrorCode::NonMonotonicTask: return "NonMonotonicTask";
        case ErrorCode::TraceMismatch: return "TraceMismatch";
        case ErrorCode::InvalidDims: return "InvalidDims";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::UnknownAxis: return "UnknownAxis";
        case ErrorCode::HashMismatch: return "HashMismatch";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

namespace {

void require_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorCode::InvalidDims,
                    "matrix must be at least 1x1, got " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

std::string shape(std::size_t r, std::size_t c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require_dims(rows, cols);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_dims(rows, cols);
    if (data_.size() != rows * cols) {
        throw Error(ErrorCode::DimensionMismatch, "buffer of length " + std::to_string(data_.size()) +
                                                      " does not match shape " + shape(rows, cols));
    }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    require_dims(rows_, cols_);
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void DenseMatrix::append_zero_column() {
    if (rows_ == 0) throw Error(ErrorCode::InvalidDims, "cannot append a column to a matrix with no rows");
    std::vector<double> next(rows_ * (cols_ + 1), 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_), cols_,
                    next.begin() + static_cast<std::ptrdiff_t>(r * (cols_ + 1)));
    }
    data_ = std::move(next);
    ++cols_;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

DenseVector matvec(const DenseMatrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "matvec: matrix " + shape(m.rows(), m.cols()) + " times vector of length " + std::to_string(x.size()));
    }
    DenseVector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), x);
    return out;
}

DenseVector matvec_transposed(const DenseMatrix& m, std::span<const double> y) {
    if (m.rows() != y.size()) {
        throw Error(ErrorCode::DimensionMismatch, "matvec_transposed: matrix " + shape(m.rows(), m.cols()) +
                                                      " transposed times vector of length " + std::to_string(y.size()));
    }
    DenseVector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) axpy(y[i], m.row(i), out);
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "matmul: " + shape(a.rows(), a.cols()) + " times " + shape(b.rows(), b.cols()));
    }
    DenseMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) axpy(a(i, k), b.row(k), out.row(i));
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "axpy: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

DenseVector stable_softmax(std::span<const double> v) {
    double max_finite = kNegInf;
    for (double e : v)
        if (e != kNegInf) max_finite = std::max(max_finite, e);
    if (max_finite == kNegInf) throw Error(ErrorCode::AllMasked, "softmax over an all-masked vector");

    DenseVector out(v.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] == kNegInf) continue;
        out[i] = std::exp(v[i] - max_finite);
        total += out[i];
    }
    for (double& e : out) e /= total;
    return out;
}

IndexSet topk_indices(std::span<const double> v, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidBudget, "top-k budget must be at least 1");
    IndexSet idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t keep = std::min(k, v.size());
    auto before = [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), before);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace mora
