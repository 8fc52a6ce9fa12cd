// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mora/numerics.hpp"

namespace mora {

struct StreamConfig {
    std::uint64_t seed = 7;
    std::size_t num_tasks = 5;
    std::size_t classes_per_task = 4;
    std::size_t dim = 32;
    std::size_t shared_dim = 8;
    /// Rotation strength of each task's domain shift; 0 keeps every task in
    /// the pretraining frame.
    double shift_strength = 2.0;
    /// Fraction of each prototype's norm that lies in the shared subspace.
    double shared_ratio = 0.5;
    double prototype_norm = 3.0;
    double noise_sigma = 0.5;
    std::size_t train_size = 2048;
    std::size_t test_size = 256;
    /// Train and evaluate each task over its own class block only; by default
    /// every prediction is made over all classes of the stream.
    bool task_local_labels = false;

    bool operator==(const StreamConfig&) const = default;
};

/// One task of a class-incremental stream. Prototypes are stored in the
/// unrotated (pretraining) frame; inputs are rotation * (prototype + noise).
struct TaskSpec {
    std::size_t task_id = 0;  // 1-based
    std::size_t label_offset = 0;
    std::vector<DenseVector> class_prototypes;
    double noise_sigma = 0.0;
    DenseMatrix rotation;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::uint64_t seed = 0;
    bool task_local_labels = false;

    std::size_t num_classes() const noexcept { return class_prototypes.size(); }
};

struct TaskStream {
    StreamConfig config;
    std::vector<TaskSpec> tasks;
    DenseMatrix shared_subspace;  // dim x shared_dim, orthonormal columns

    std::size_t total_classes() const noexcept { return config.num_tasks * config.classes_per_task; }
};

/// Contiguous block of logits a prediction is made over; count == 0 means all.
struct LabelWindow {
    std::size_t begin = 0;
    std::size_t count = 0;
};

struct Batch {
    std::vector<DenseVector> inputs;
    std::vector<std::size_t> labels;  // global class ids
    LabelWindow window;

    std::size_t size() const noexcept { return labels.size(); }
};

/// Throws ErrorCode::InvalidDims when shared_dim >= dim, num_tasks == 0,
/// classes_per_task == 0 or shared_ratio is outside [0, 1].
TaskStream make_stream(const StreamConfig& cfg);

Batch sample_batch(const TaskSpec& task, std::size_t n, std::mt19937_64& rng);

/// Held-out split of a task, drawn from its own seed stream.
Batch test_split(const TaskSpec& task);

/// Samples from every class of the stream in the unrotated frame: the broad
/// distribution the frozen base is pretrained on.
Batch pretrain_batch(const TaskStream& stream, std::size_t n, std::mt19937_64& rng);

/// Held-out split of the pretraining distribution.
Batch pretrain_test_split(const TaskStream& stream, std::size_t n);

/// Accuracy of the nearest rotated-prototype classifier restricted to the
/// task's own classes.
double nearest_prototype_accuracy(const TaskSpec& task, const Batch& batch);

/// Deterministic 64-bit seed derivation for independent random streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace mora
