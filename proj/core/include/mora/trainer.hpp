// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mora/adapter.hpp"
#include "mora/baselines.hpp"
#include "mora/taskgen.hpp"

namespace mora {

struct ArchConfig {
    std::vector<std::size_t> hidden = {32, 32};
    std::size_t r_per_task = 16;
    Method method = Method::SelfAdaptive;
    GateConfig gate;
    /// Attach a rank pool to the classification head as well as the hidden layers.
    bool adapt_head = true;

    bool operator==(const ArchConfig&) const = default;
};

struct OptimConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t iters_per_task = 500;
    std::size_t batch_size = 32;

    bool operator==(const OptimConfig&) const = default;
};

struct PretrainConfig {
    std::size_t steps = 1500;
    std::size_t batch_size = 64;
    double lr = 3e-3;
    std::size_t test_size = 1024;

    bool operator==(const PretrainConfig&) const = default;
};

/// One adapted matrix plus the router its baseline mode may need.
struct ModelLayer {
    AdaptedLinear adapted;
    RouterParams router;

    bool operator==(const ModelLayer&) const = default;
};

/// Stack of adapted linear maps with tanh between them; the last layer is the
/// classification head over every class of the stream.
struct ToyModel {
    std::vector<ModelLayer> layers;
    MethodConfig method;
    bool adapt_head = true;

    ModelLayer& head() { return layers.back(); }
    const ModelLayer& head() const { return layers.back(); }
    std::size_t input_dim() const { return layers.front().adapted.d_in(); }
    std::size_t num_classes() const { return layers.back().adapted.d_out(); }
    /// Layers that receive rank pools: every hidden layer, plus the head when enabled.
    bool is_adapted(std::size_t layer) const { return adapt_head || layer + 1 < layers.size(); }

    bool operator==(const ToyModel&) const = default;
};

/// Gate record of one layer for one input: the self-activated trace, or the
/// router trace in baseline modes.
struct LayerTrace {
    GateTrace gate;
    RoutedTrace routed;

    /// Weight applied to every unit of the pool for this input.
    DenseVector unit_weights(const ModelLayer& layer, GateMode mode) const;
};

struct ForwardCache {
    std::vector<DenseVector> inputs;  // input of each layer
    std::vector<DenseVector> outputs; // pre-activation output of each layer
    std::vector<LayerTrace> traces;

    const DenseVector& logits() const { return outputs.back(); }
};

ForwardCache model_forward(const ToyModel& model, std::span<const double> x);

/// Parameter gradients aligned with the model; empty entries for frozen units.
struct LayerGrads {
    std::vector<DenseVector> d_key_a;
    std::vector<DenseVector> d_value_b;
    DenseMatrix d_router;
};

struct ModelGrads {
    std::vector<LayerGrads> layers;
    DenseVector d_input;
};

ModelGrads model_backward(const ToyModel& model, const ForwardCache& cache, std::span<const double> d_logits);

struct CrossEntropy {
    double loss = 0.0;
    DenseVector d_logits;
};

/// -log softmax(logits)[label] and its gradient softmax - onehot.
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label);

/// Cross-entropy over the logits inside the window; d_logits is zero outside.
CrossEntropy windowed_cross_entropy(std::span<const double> logits, std::size_t label, LabelWindow window);

/// Arg-max class id within the window.
std::size_t predict(std::span<const double> logits, LabelWindow window);

/// Decoupled-weight-decay Adam state for a fixed list of trainable tensors.
struct OptimState {
    OptimConfig cfg;
    std::vector<DenseVector> m;
    std::vector<DenseVector> v;
    std::size_t step = 0;
};

OptimState make_optim_state(const OptimConfig& cfg, std::span<const std::span<double>> params);

/// One AdamW update; params and grads are matched by position with the state.
void adamw_step(OptimState& opt, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads);

/// Trainable tensors of the model in a fixed order: keys and values of every
/// non-frozen unit, then router matrices in router modes.
std::vector<std::span<double>> trainable_params(ToyModel& model);
std::vector<std::span<const double>> matching_grads(const ToyModel& model, const ModelGrads& grads);

/// Builds the frozen base network (empty rank pools) and trains its base
/// weights on the broad unrotated distribution of the stream.
ToyModel pretrain_base(const ArchConfig& arch, const TaskStream& stream, const PretrainConfig& cfg,
                       std::uint64_t seed);

struct PretrainReport {
    double train_accuracy = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double test_loss = 0.0;
};

PretrainReport pretrain_report(const ToyModel& model, const TaskStream& stream, const PretrainConfig& cfg,
                               std::uint64_t seed);

/// Switches a base model (empty pools) to another method, gate or rank count.
void configure_method(ToyModel& model, Method method, const GateConfig& gate, std::size_t r_per_task);

/// Prepares every layer for task_id: freeze-and-grow (or, for SeqLoRA, create
/// the shared pool once) and extend routers to cover the new experts.
void grow_model(ToyModel& model, std::size_t task_id, std::uint64_t seed);

struct TrainLog {
    std::vector<double> losses;  // mean batch loss per iteration
};

/// Optimizes the trainable parameters on one task with cross-entropy only.
TrainLog train_task(ToyModel& model, const TaskSpec& task, const OptimConfig& cfg, std::uint64_t seed);

double evaluate_accuracy(const ToyModel& model, const Batch& batch);
double evaluate_loss(const ToyModel& model, const Batch& batch);

/// acc[i][j]: accuracy on task j's test split after finishing task i.
struct AccuracyMatrix {
    std::size_t num_tasks = 0;
    std::vector<DenseVector> rows;

    bool complete() const noexcept { return rows.size() == num_tasks; }
    double at(std::size_t i, std::size_t j) const { return rows.at(i).at(j); }

    bool operator==(const AccuracyMatrix&) const = default;
};

enum class AverageDefinition {
    TransferLast,  // (Transfer + Last) / 2
    Steps,         // per task, mean accuracy over all training steps
};

struct ContinualMetrics {
    /// Per task; NaN where undefined (the first task has no Transfer entry).
    DenseVector transfer;
    DenseVector last;
    DenseVector average;
    double mean_transfer = 0.0;
    double mean_last = 0.0;
    double mean_average = 0.0;
    /// Average under the definition that was not selected.
    double alternative_average = 0.0;
};

ContinualMetrics compute_metrics(const AccuracyMatrix& acc,
                                 AverageDefinition definition = AverageDefinition::TransferLast);

struct ContinualOptions {
    OptimConfig optim;
    std::uint64_t seed = 0;
    /// 1-based task to start from; earlier rows must already be in `initial`.
    std::size_t start_task = 1;
    AccuracyMatrix initial;
    /// Called after each task's row is filled.
    std::function<void(const ToyModel&, const AccuracyMatrix&, std::size_t task_id)> on_task_done;
    std::function<void(std::size_t task_id, const TrainLog&)> on_train_log;
};

struct ContinualResult {
    AccuracyMatrix acc;
    ToyModel model;
};

ContinualResult continual_run(const TaskStream& stream, ToyModel model, const ContinualOptions& opts);

}  // namespace mora
