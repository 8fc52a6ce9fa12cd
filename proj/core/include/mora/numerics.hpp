// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "mora/error.hpp"

namespace mora {

/// Sentinel for masked scores. Softmax maps it to an exact zero.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using DenseVector = std::vector<double>;
using IndexSet = std::vector<std::size_t>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Appends one column of zeros; existing entries keep their (row, col) position.
    void append_zero_column();

    DenseMatrix transposed() const;

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseVector matvec(const DenseMatrix& m, std::span<const double> x);
/// Computes Mᵀy without materializing the transpose.
DenseVector matvec_transposed(const DenseMatrix& m, std::span<const double> y);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Softmax with max-subtraction. kNegInf entries map to exactly 0.
/// Throws ErrorCode::AllMasked when no entry is finite.
DenseVector stable_softmax(std::span<const double> v);

/// Indices of the min(k, v.size()) largest entries, ties broken by lowest
/// index. Returned in ascending index order.
IndexSet topk_indices(std::span<const double> v, std::size_t k);

}  // namespace mora
