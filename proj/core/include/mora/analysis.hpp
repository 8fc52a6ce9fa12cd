// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mora/trainer.hpp"

namespace mora {

struct LayerProfile {
    std::size_t layer = 0;
    DenseVector mean_abs_weight;  // per rank, mean |w_i| over the dataset
    DenseVector frequency;        // per rank, fraction of inputs with w_i != 0
    std::vector<std::size_t> owner_task;
};

struct ActivationProfile {
    std::vector<LayerProfile> layers;
    std::size_t samples = 0;
};

/// Aggregates gate weights of every layer over the inputs, in input order.
/// Layers without a rank pool yield empty per-rank vectors.
/// Throws ErrorCode::EmptyDataset when inputs is empty.
ActivationProfile activation_profile(const ToyModel& model, std::span<const DenseVector> inputs);

/// Smallest number of ranks, taken in descending order of mean activation,
/// whose activation sum reaches `fraction` of the total. 0 for an all-zero or
/// empty profile. Throws ErrorCode::InvalidConfig unless 0 < fraction <= 1.
std::size_t coverage_count(std::span<const double> mean_activation, double fraction = 0.99);
std::vector<std::size_t> coverage_count(const ActivationProfile& profile, double fraction = 0.99);

/// reuse[t][u]: share of the total gate mass carried by task-u ranks (summed
/// over layers) while evaluating the inputs of task t. Rows sum to 1, or to 0
/// when every weight was zero.
std::vector<DenseVector> reuse_matrix(const ToyModel& model, std::span<const Batch> per_task_data);

/// Shannon entropy (nats) of |w| normalized to sum 1; 0 for an all-zero vector.
double gate_entropy(std::span<const double> weights);
double gate_entropy(const GateTrace& trace);

struct ParamReportRow {
    std::size_t layer = 0;
    std::size_t d_in = 0;
    std::size_t d_out = 0;
    ParamCounts counts;
    std::size_t lora = 0;      // r (d_in + d_out)
    std::size_t moe_lora = 0;  // r (d_in + d_out) + d_in
};

/// Per-task trainable-parameter accounting for every adapted layer.
std::vector<ParamReportRow> param_report(const ToyModel& model);

}  // namespace mora
