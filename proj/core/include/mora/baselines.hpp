// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mora/adapter.hpp"

namespace mora {

/// Learned router W_r, stored d_in x E (one column per expert). Starts with no
/// columns; grow_router appends zero columns, so a fresh router is uniform.
struct RouterParams {
    std::size_t d_in = 0;
    DenseMatrix w_r;

    std::size_t experts() const noexcept { return w_r.empty() ? 0 : w_r.cols(); }

    bool operator==(const RouterParams&) const = default;
};

void grow_router(RouterParams& router, std::size_t new_experts);

/// Half-open unit range [begin, end) of the pool that one router column drives.
struct UnitRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// One expert per task block (RouterLoRA) or one per rank-1 unit (RouterRank).
std::vector<UnitRange> expert_ranges(const RankPool& pool, GateMode mode);

struct RoutedTrace {
    DenseVector activations;  // per unit, A_i . x
    DenseVector logits;       // per expert, x^T W_r
    IndexSet topk_set;        // selected experts
    DenseVector weights;      // per expert, 0 outside topk_set
};

struct RoutedOutput {
    DenseVector y;
    RoutedTrace trace;
};

struct RoutedGrads {
    AdapterGrads adapter;
    DenseMatrix d_w_r;  // same shape as the router
};

/// y = W0 x + sum_{e in topk} softmax(logits|topk)_e * sum_{i in e} (A_i . x) B_i
RoutedOutput routed_forward(const AdaptedLinear& layer, const RouterParams& router,
                            std::span<const UnitRange> experts, std::span<const double> x, std::size_t k);

RoutedGrads routed_backward(const AdaptedLinear& layer, const RouterParams& router,
                            std::span<const UnitRange> experts, std::span<const double> x, const RoutedTrace& trace,
                            std::span<const double> dy);

/// A whole LoRA block: a is r x d_in, b is d_out x r.
struct LoraExpert {
    DenseMatrix a;
    DenseMatrix b;
};

/// MoE-LoRA with a learned top-k router over whole LoRA experts.
RoutedOutput moe_lora_forward(const DenseMatrix& w0, std::span<const LoraExpert> experts,
                              const RouterParams& router, std::span<const double> x, std::size_t k);

/// Router@rank: one router column per rank-1 unit of the pool.
RoutedOutput rank_router_forward(const AdaptedLinear& layer, const RouterParams& router, std::span<const double> x,
                                 std::size_t k);

/// Router@LoRA over the pool: one router column per task block.
RoutedOutput router_lora_forward(const AdaptedLinear& layer, const RouterParams& router, std::span<const double> x,
                                 std::size_t k);

/// Trainable parameters per task for MoE-LoRA with one expert per task.
std::size_t moe_lora_param_count(std::size_t r, std::size_t d_in, std::size_t d_out);

/// Every strategy the continual harness can run.
enum class Method { SelfAdaptive, SelfSparse, SelfRaw, RouterLoRA, RouterRank, IncLoRA, SeqLoRA };

enum class DenseVariant { SeqLoRA, IncLoRA };

struct MethodConfig {
    GateMode gate = GateMode::SelfAdaptive;
    /// Freeze-and-grow at every task; otherwise one pool is created at the
    /// first task and keeps training.
    bool grow_each_task = true;

    bool operator==(const MethodConfig&) const = default;
};

/// SeqLoRA: one pool created at the first task and trained on every task.
/// IncLoRA: freeze-and-grow with a Dense gate.
MethodConfig dense_baseline_mode(DenseVariant variant);
MethodConfig method_config(Method method);

std::string_view to_string(Method method);
std::optional<Method> parse_method(std::string_view name);
std::span<const Method> all_methods();

}  // namespace mora
