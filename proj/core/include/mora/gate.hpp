// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mora/numerics.hpp"

namespace mora {

/// How mixture weights over rank-1 units are produced.
///
///   Dense         every unit has weight 1 (plain LoRA / IncLoRA / SeqLoRA)
///   RouterLoRA    learned router over whole per-task LoRA blocks (baselines)
///   RouterRank    learned router over individual rank-1 units (baselines)
///   SelfRaw       softmax of the normalized self-activation scores, no masking
///   SelfSparse    top-k budget + temperature softmax
///   SelfAdaptive  top-k budget + temperature softmax + threshold pruning
enum class GateMode { Dense, RouterLoRA, RouterRank, SelfRaw, SelfSparse, SelfAdaptive };

std::string_view to_string(GateMode mode);
std::optional<GateMode> parse_gate_mode(std::string_view name);
bool is_router_mode(GateMode mode) noexcept;

struct GateConfig {
    double tau = 0.1;
    std::size_t budget_k = 16;
    double delta = 0.2;
    double eps = 1e-12;
    GateMode mode = GateMode::SelfAdaptive;
    /// SelfRaw only: when false the scores themselves are the weights
    /// (final_w = s) instead of softmax(s) at unit temperature.
    bool raw_softmax = true;

    bool operator==(const GateConfig&) const = default;
};

/// Throws ErrorCode::InvalidConfig on tau <= 0, budget_k == 0, eps <= 0 or delta < 0.
void validate(const GateConfig& cfg);

/// Per-input record of the gate computation. Consumed by the backward pass
/// and by the activation analysis.
struct GateTrace {
    DenseVector activations_a;  // a_i = key_i . x
    double norm_n = 0.0;        // sqrt(sum a^2 + eps)
    DenseVector raw_scores_s;   // s_i = a_i / n
    IndexSet topk_set;          // ascending indices that survived the budget
    DenseVector softmax_w;      // softmax over masked scores, before pruning
    std::vector<std::uint8_t> prune_mask_m;
    DenseVector final_w;

    std::size_t size() const noexcept { return final_w.size(); }
};

struct RawScores {
    DenseVector a;
    double n = 0.0;
    DenseVector s;
};

RawScores raw_scores(const DenseMatrix& keys, std::span<const double> x, double eps);
/// Same as raw_scores once the per-rank activations are known.
RawScores normalize_activations(DenseVector a, double eps);

/// Keeps the top-k entries of s and replaces the rest with kNegInf.
DenseVector apply_budget(std::span<const double> s, std::size_t k);

/// softmax(masked_s / tau); masked entries come out exactly 0.
DenseVector gate_weights(std::span<const double> masked_s, double tau);

/// out_i = w_i if s_i >= delta else 0. No renormalization.
DenseVector prune(std::span<const double> w, std::span<const double> s, double delta);

/// Runs the self-activated gate (or the Dense baseline) for one input.
/// Throws ErrorCode::WrongMode for router-based modes.
GateTrace gate_pipeline(const DenseMatrix& keys, std::span<const double> x, const GateConfig& cfg);
GateTrace gate_from_activations(DenseVector activations, const GateConfig& cfg);

}  // namespace mora
