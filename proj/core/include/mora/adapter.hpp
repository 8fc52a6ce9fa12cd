// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mora/gate.hpp"
#include "mora/numerics.hpp"

namespace mora {

/// One rank-1 expert: key row A_i (d_in) and value column B_i (d_out).
struct RankUnit {
    DenseVector key_a;
    DenseVector value_b;
    std::size_t task_id = 0;
    bool frozen = false;

    bool operator==(const RankUnit&) const = default;
};

/// Units for one adapted matrix, grouped contiguously by ascending task id.
struct RankPool {
    std::vector<RankUnit> units;
    std::size_t r_per_task = 0;

    std::size_t size() const noexcept { return units.size(); }
    bool empty() const noexcept { return units.empty(); }
    /// Largest task id present, 0 for an empty pool.
    std::size_t last_task() const noexcept { return units.empty() ? 0 : units.back().task_id; }

    bool operator==(const RankPool&) const = default;
};

/// A frozen base matrix W0 plus a growing pool of gated rank-1 units:
///
///   y = W0 x + sum_i w_i (A_i . x) B_i
///
/// where w comes from the self-activated gate over every unit in the pool.
struct AdaptedLinear {
    DenseMatrix w0;
    RankPool pool;
    GateConfig cfg;

    AdaptedLinear() = default;
    AdaptedLinear(DenseMatrix base, GateConfig gate, std::size_t r_per_task);

    std::size_t d_in() const noexcept { return w0.cols(); }
    std::size_t d_out() const noexcept { return w0.rows(); }

    /// Stacked keys as an r_t x d_in matrix. Pool must be non-empty.
    DenseMatrix key_matrix() const;
    /// Stacked values as a d_out x r_t matrix. Pool must be non-empty.
    DenseMatrix value_matrix() const;

    bool operator==(const AdaptedLinear&) const = default;
};

struct AdapterOutput {
    DenseVector y;
    GateTrace trace;  // empty when the pool is empty
};

/// Gradients of a scalar loss. d_key_a / d_value_b are index-aligned with the
/// pool; entries for frozen units are left empty.
struct AdapterGrads {
    std::vector<DenseVector> d_key_a;
    std::vector<DenseVector> d_value_b;
    DenseVector d_x;
};

/// Per-rank activations a_i = A_i . x for every unit in the pool.
DenseVector rank_activations(const RankPool& pool, std::span<const double> x);

/// W0 x + sum_i weights_i * activations_i * B_i; zero weights are skipped.
DenseVector mix_values(const AdaptedLinear& layer, std::span<const double> x, std::span<const double> activations,
                       std::span<const double> weights);

AdapterOutput adapter_forward(const AdaptedLinear& layer, std::span<const double> x);

/// Reverse-mode pass for adapter_forward. The top-k and pruning masks recorded
/// in the trace are held constant.
AdapterGrads adapter_backward(const AdaptedLinear& layer, std::span<const double> x, const GateTrace& trace,
                              std::span<const double> dy);

/// Maps d(loss)/d(final_w) to d(loss)/d(a) through pruning, the masked
/// temperature softmax and the l2 normalization. Dense mode has no gate path
/// and returns zeros.
DenseVector gate_backward(const GateConfig& cfg, const GateTrace& trace, std::span<const double> d_final_w);

/// Freezes every existing unit and appends r_new fresh ones for task_id with
/// keys ~ N(0, 1/d_in) and zero values.
/// Throws ErrorCode::NonMonotonicTask unless task_id exceeds every existing id.
void grow(RankPool& pool, std::size_t r_new, std::size_t task_id, std::size_t d_in, std::size_t d_out,
          std::uint64_t rng_seed);

struct ParamCounts {
    std::size_t added = 0;
    std::size_t activated = 0;
};

/// Trainable parameters added per task, and those touched per input under the
/// activation budget (r d_in + min(k, r) d_out). Modes without a budget use k = r.
ParamCounts param_counts(const AdaptedLinear& layer);

}  // namespace mora
