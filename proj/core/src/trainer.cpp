// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace mora {

namespace {

constexpr std::uint64_t kGrowStream = 0x6e0;
constexpr std::uint64_t kTrainStream = 0x7a1;
constexpr std::uint64_t kInitStream = 0x1417;

bool uses_router(GateMode mode) { return is_router_mode(mode); }

void add_into(DenseVector& acc, const DenseVector& g) {
    if (g.empty()) return;
    if (acc.empty()) {
        acc = g;
        return;
    }
    axpy(1.0, g, acc);
}

void accumulate(ModelGrads& acc, const ModelGrads& g) {
    if (acc.layers.empty()) {
        acc = g;
        return;
    }
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        LayerGrads& a = acc.layers[l];
        const LayerGrads& b = g.layers[l];
        for (std::size_t i = 0; i < b.d_key_a.size(); ++i) {
            add_into(a.d_key_a[i], b.d_key_a[i]);
            add_into(a.d_value_b[i], b.d_value_b[i]);
        }
        if (!b.d_router.empty()) axpy(1.0, b.d_router.data(), a.d_router.data());
    }
}

void scale(ModelGrads& g, double f) {
    for (auto& layer : g.layers) {
        for (auto& v : layer.d_key_a)
            for (double& e : v) e *= f;
        for (auto& v : layer.d_value_b)
            for (double& e : v) e *= f;
        for (double& e : layer.d_router.data()) e *= f;
    }
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

}  // namespace

DenseVector LayerTrace::unit_weights(const ModelLayer& layer, GateMode mode) const {
    if (!uses_router(mode)) return gate.final_w;
    DenseVector w(layer.adapted.pool.size(), 0.0);
    if (routed.weights.empty()) return w;
    const auto experts = expert_ranges(layer.adapted.pool, mode);
    for (std::size_t e : routed.topk_set)
        for (std::size_t i = experts[e].begin; i < experts[e].end; ++i) w[i] = routed.weights[e];
    return w;
}

ForwardCache model_forward(const ToyModel& model, std::span<const double> x) {
    ForwardCache cache;
    const std::size_t n = model.layers.size();
    cache.inputs.reserve(n);
    cache.outputs.reserve(n);
    cache.traces.resize(n);
    DenseVector h(x.begin(), x.end());
    for (std::size_t l = 0; l < n; ++l) {
        const ModelLayer& layer = model.layers[l];
        cache.inputs.push_back(h);
        DenseVector y;
        if (uses_router(model.method.gate)) {
            const auto experts = expert_ranges(layer.adapted.pool, model.method.gate);
            RoutedOutput out = routed_forward(layer.adapted, layer.router, experts, h, layer.adapted.cfg.budget_k);
            y = std::move(out.y);
            cache.traces[l].routed = std::move(out.trace);
        } else {
            AdapterOutput out = adapter_forward(layer.adapted, h);
            y = std::move(out.y);
            cache.traces[l].gate = std::move(out.trace);
        }
        if (l + 1 < n) {
            h = y;
            for (double& e : h) e = std::tanh(e);
        }
        cache.outputs.push_back(std::move(y));
    }
    return cache;
}

ModelGrads model_backward(const ToyModel& model, const ForwardCache& cache, std::span<const double> d_logits) {
    const std::size_t n = model.layers.size();
    ModelGrads grads;
    grads.layers.resize(n);
    DenseVector d(d_logits.begin(), d_logits.end());
    for (std::size_t l = n; l-- > 0;) {
        const ModelLayer& layer = model.layers[l];
        if (l + 1 < n) {
            // d/dz tanh(z) = 1 - tanh(z)^2, and tanh(z) is the next layer's input.
            const DenseVector& act = cache.inputs[l + 1];
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - act[i] * act[i];
        }
        LayerGrads& lg = grads.layers[l];
        if (uses_router(model.method.gate)) {
            const auto experts = expert_ranges(layer.adapted.pool, model.method.gate);
            RoutedGrads rg =
                routed_backward(layer.adapted, layer.router, experts, cache.inputs[l], cache.traces[l].routed, d);
            lg.d_key_a = std::move(rg.adapter.d_key_a);
            lg.d_value_b = std::move(rg.adapter.d_value_b);
            lg.d_router = std::move(rg.d_w_r);
            d = std::move(rg.adapter.d_x);
        } else {
            AdapterGrads ag = adapter_backward(layer.adapted, cache.inputs[l], cache.traces[l].gate, d);
            lg.d_key_a = std::move(ag.d_key_a);
            lg.d_value_b = std::move(ag.d_value_b);
            d = std::move(ag.d_x);
        }
    }
    grads.d_input = std::move(d);
    return grads;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size()) {
        throw Error(ErrorCode::DimensionMismatch, "label " + std::to_string(label) + " outside " +
                                                      std::to_string(logits.size()) + " logits");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) total += std::exp(z - max_logit);
    const double log_norm = max_logit + std::log(total);

    CrossEntropy out;
    out.loss = log_norm - logits[label];
    out.d_logits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out.d_logits[i] = std::exp(logits[i] - log_norm);
    out.d_logits[label] -= 1.0;
    return out;
}

CrossEntropy windowed_cross_entropy(std::span<const double> logits, std::size_t label, LabelWindow window) {
    if (window.count == 0) return cross_entropy(logits, label);
    if (window.begin + window.count > logits.size() || label < window.begin || label >= window.begin + window.count) {
        throw Error(ErrorCode::DimensionMismatch, "label " + std::to_string(label) + " outside its label window");
    }
    CrossEntropy inner = cross_entropy(logits.subspan(window.begin, window.count), label - window.begin);
    CrossEntropy out;
    out.loss = inner.loss;
    out.d_logits.assign(logits.size(), 0.0);
    std::ranges::copy(inner.d_logits, out.d_logits.begin() + static_cast<std::ptrdiff_t>(window.begin));
    return out;
}

std::size_t predict(std::span<const double> logits, LabelWindow window) {
    if (window.count == 0) return argmax(logits);
    return window.begin + argmax(logits.subspan(window.begin, window.count));
}

OptimState make_optim_state(const OptimConfig& cfg, std::span<const std::span<double>> params) {
    OptimState st;
    st.cfg = cfg;
    for (const auto& p : params) {
        st.m.emplace_back(p.size(), 0.0);
        st.v.emplace_back(p.size(), 0.0);
    }
    return st;
}

void adamw_step(OptimState& opt, std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
    if (params.size() != opt.m.size() || grads.size() != params.size()) {
        throw Error(ErrorCode::DimensionMismatch, "adamw_step: " + std::to_string(params.size()) + " params, " +
                                                      std::to_string(grads.size()) + " grads, state for " +
                                                      std::to_string(opt.m.size()));
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].size() != opt.m[p].size() || grads[p].size() != params[p].size()) {
            throw Error(ErrorCode::DimensionMismatch, "adamw_step: shape mismatch at tensor " + std::to_string(p));
        }
    }
    const OptimConfig& c = opt.cfg;
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - c.lr * c.weight_decay;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& m = opt.m[p];
        auto& v = opt.v[p];
        const auto g = grads[p];
        auto w = params[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            w[i] = w[i] * decay - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

std::vector<std::span<double>> trainable_params(ToyModel& model) {
    std::vector<std::span<double>> out;
    for (auto& layer : model.layers) {
        for (auto& unit : layer.adapted.pool.units) {
            if (unit.frozen) continue;
            out.emplace_back(unit.key_a);
            out.emplace_back(unit.value_b);
        }
    }
    if (uses_router(model.method.gate)) {
        for (auto& layer : model.layers)
            if (!layer.router.w_r.empty()) out.push_back(layer.router.w_r.data());
    }
    return out;
}

std::vector<std::span<const double>> matching_grads(const ToyModel& model, const ModelGrads& grads) {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& units = model.layers[l].adapted.pool.units;
        for (std::size_t i = 0; i < units.size(); ++i) {
            if (units[i].frozen) continue;
            out.emplace_back(grads.layers[l].d_key_a[i]);
            out.emplace_back(grads.layers[l].d_value_b[i]);
        }
    }
    if (uses_router(model.method.gate)) {
        for (std::size_t l = 0; l < model.layers.size(); ++l)
            if (!model.layers[l].router.w_r.empty()) out.push_back(grads.layers[l].d_router.data());
    }
    return out;
}

ToyModel pretrain_base(const ArchConfig& arch, const TaskStream& stream, const PretrainConfig& cfg,
                       std::uint64_t seed) {
    std::vector<std::size_t> dims;
    dims.push_back(stream.config.dim);
    dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
    dims.push_back(stream.total_classes());

    ToyModel model;
    std::mt19937_64 init_rng(derive_seed(seed, kInitStream));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t d_in = dims[l];
        const std::size_t d_out = dims[l + 1];
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
        DenseMatrix w0(d_out, d_in);
        for (double& e : w0.data()) e = dist(init_rng);
        ModelLayer layer;
        layer.adapted = AdaptedLinear(std::move(w0), arch.gate, arch.r_per_task);
        layer.router.d_in = d_in;
        model.layers.push_back(std::move(layer));
    }
    model.adapt_head = arch.adapt_head;
    configure_method(model, arch.method, arch.gate, arch.r_per_task);

    if (cfg.steps == 0) return model;

    // Base weights are trainable only here; the pools are empty so every layer
    // is a plain linear map and dL/dW0 = dy x^T.
    std::vector<std::span<double>> params;
    for (auto& layer : model.layers) params.push_back(layer.adapted.w0.data());
    OptimConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = 0.0;
    OptimState opt = make_optim_state(opt_cfg, params);

    std::mt19937_64 rng(derive_seed(seed, kTrainStream));
    const std::size_t n = model.layers.size();
    std::vector<DenseMatrix> grads;
    for (const auto& layer : model.layers) grads.emplace_back(layer.adapted.w0.rows(), layer.adapted.w0.cols());
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (auto& g : grads) std::fill(g.data().begin(), g.data().end(), 0.0);
        const Batch batch = pretrain_batch(stream, cfg.batch_size, rng);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const ForwardCache cache = model_forward(model, batch.inputs[b]);
            DenseVector d = windowed_cross_entropy(cache.logits(), batch.labels[b], batch.window).d_logits;
            for (std::size_t l = n; l-- > 0;) {
                if (l + 1 < n) {
                    const DenseVector& act = cache.inputs[l + 1];
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - act[i] * act[i];
                }
                const DenseVector& x = cache.inputs[l];
                for (std::size_t r = 0; r < d.size(); ++r) axpy(d[r], x, grads[l].row(r));
                d = matvec_transposed(model.layers[l].adapted.w0, d);
            }
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        std::vector<std::span<const double>> gspans;
        for (auto& g : grads) {
            for (double& e : g.data()) e *= inv;
            gspans.push_back(g.data());
        }
        adamw_step(opt, params, gspans);
    }
    return model;
}

PretrainReport pretrain_report(const ToyModel& model, const TaskStream& stream, const PretrainConfig& cfg,
                               std::uint64_t seed) {
    PretrainReport report;
    std::mt19937_64 rng(derive_seed(seed, kTrainStream));
    const Batch train = pretrain_batch(stream, cfg.test_size, rng);
    const Batch test = pretrain_test_split(stream, cfg.test_size);
    report.train_accuracy = evaluate_accuracy(model, train);
    report.train_loss = evaluate_loss(model, train);
    report.test_accuracy = evaluate_accuracy(model, test);
    report.test_loss = evaluate_loss(model, test);
    return report;
}

void configure_method(ToyModel& model, Method method, const GateConfig& gate, std::size_t r_per_task) {
    validate(gate);
    model.method = method_config(method);
    for (auto& layer : model.layers) {
        if (!layer.adapted.pool.empty()) {
            throw Error(ErrorCode::InvalidConfig, "cannot change method once rank pools are populated");
        }
        layer.adapted.cfg = gate;
        layer.adapted.cfg.mode = model.method.gate;
        layer.adapted.pool.r_per_task = r_per_task;
        layer.router = RouterParams{layer.adapted.d_in(), DenseMatrix{}};
    }
}

void grow_model(ToyModel& model, std::size_t task_id, std::uint64_t seed) {
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (!model.is_adapted(l)) continue;
        ModelLayer& layer = model.layers[l];
        RankPool& pool = layer.adapted.pool;
        if (!model.method.grow_each_task && !pool.empty()) continue;
        const std::size_t r = pool.r_per_task;
        grow(pool, r, task_id, layer.adapted.d_in(), layer.adapted.d_out(), derive_seed(seed, task_id, l));
        if (model.method.gate == GateMode::RouterLoRA) grow_router(layer.router, 1);
        if (model.method.gate == GateMode::RouterRank) grow_router(layer.router, r);
    }
}

TrainLog train_task(ToyModel& model, const TaskSpec& task, const OptimConfig& cfg, std::uint64_t seed) {
    TrainLog log;
    if (cfg.iters_per_task == 0) return log;
    std::vector<std::span<double>> params = trainable_params(model);
    OptimState opt = make_optim_state(cfg, params);
    std::mt19937_64 rng(seed);
    const double inv = 1.0 / static_cast<double>(cfg.batch_size);
    log.losses.reserve(cfg.iters_per_task);
    for (std::size_t it = 0; it < cfg.iters_per_task; ++it) {
        const Batch batch = sample_batch(task, cfg.batch_size, rng);
        ModelGrads total;
        double loss = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const ForwardCache cache = model_forward(model, batch.inputs[b]);
            const CrossEntropy ce = windowed_cross_entropy(cache.logits(), batch.labels[b], batch.window);
            loss += ce.loss;
            accumulate(total, model_backward(model, cache, ce.d_logits));
        }
        scale(total, inv);
        adamw_step(opt, params, matching_grads(model, total));
        log.losses.push_back(loss * inv);
    }
    return log;
}

double evaluate_accuracy(const ToyModel& model, const Batch& batch) {
    if (batch.size() == 0) throw Error(ErrorCode::EmptyDataset, "accuracy of an empty batch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ForwardCache cache = model_forward(model, batch.inputs[i]);
        if (predict(cache.logits(), batch.window) == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double evaluate_loss(const ToyModel& model, const Batch& batch) {
    if (batch.size() == 0) throw Error(ErrorCode::EmptyDataset, "loss of an empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += windowed_cross_entropy(model_forward(model, batch.inputs[i]).logits(), batch.labels[i], batch.window).loss;
    return total / static_cast<double>(batch.size());
}

ContinualMetrics compute_metrics(const AccuracyMatrix& acc, AverageDefinition definition) {
    if (!acc.complete() || acc.num_tasks == 0) {
        throw Error(ErrorCode::InvalidDims, "metrics need a complete accuracy matrix");
    }
    const std::size_t n = acc.num_tasks;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    ContinualMetrics m;
    m.transfer.assign(n, nan);
    m.last.assign(n, 0.0);
    m.average.assign(n, nan);
    DenseVector steps(n, 0.0);

    double transfer_sum = 0.0;
    std::size_t transfer_count = 0;
    double last_sum = 0.0;
    double steps_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) {
            double s = 0.0;
            for (std::size_t i = 0; i < j; ++i) s += acc.at(i, j);
            m.transfer[j] = s / static_cast<double>(j);
            transfer_sum += m.transfer[j];
            ++transfer_count;
        }
        m.last[j] = acc.at(n - 1, j);
        last_sum += m.last[j];
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += acc.at(i, j);
        steps[j] = col / static_cast<double>(n);
        steps_sum += steps[j];
    }
    m.mean_last = last_sum / static_cast<double>(n);
    m.mean_transfer = transfer_count > 0 ? transfer_sum / static_cast<double>(transfer_count) : nan;
    // A single-task stream has no Transfer entry; its Average falls back to Last.
    const double transfer_last = transfer_count > 0 ? 0.5 * (m.mean_transfer + m.mean_last) : m.mean_last;
    const double step_mean = steps_sum / static_cast<double>(n);

    if (definition == AverageDefinition::TransferLast) {
        for (std::size_t j = 0; j < n; ++j)
            if (j > 0) m.average[j] = 0.5 * (m.transfer[j] + m.last[j]);
        if (n == 1) m.average[0] = m.last[0];
        m.mean_average = transfer_last;
        m.alternative_average = step_mean;
    } else {
        m.average = steps;
        m.mean_average = step_mean;
        m.alternative_average = transfer_last;
    }
    return m;
}

ContinualResult continual_run(const TaskStream& stream, ToyModel model, const ContinualOptions& opts) {
    const std::size_t num_tasks = stream.tasks.size();
    if (num_tasks == 0) throw Error(ErrorCode::InvalidDims, "stream has no tasks");
    if (opts.start_task == 0 || opts.start_task > num_tasks + 1) {
        throw Error(ErrorCode::InvalidConfig, "start task " + std::to_string(opts.start_task) + " outside the stream");
    }
    ContinualResult result;
    result.acc.num_tasks = num_tasks;
    result.acc.rows = opts.initial.rows;
    if (result.acc.rows.size() != opts.start_task - 1) {
        throw Error(ErrorCode::InvalidConfig, "resuming at task " + std::to_string(opts.start_task) + " needs " +
                                                  std::to_string(opts.start_task - 1) + " accuracy rows, got " +
                                                  std::to_string(result.acc.rows.size()));
    }

    std::vector<Batch> tests;
    tests.reserve(num_tasks);
    for (const auto& task : stream.tasks) tests.push_back(test_split(task));

    for (std::size_t t = opts.start_task; t <= num_tasks; ++t) {
        const TaskSpec& task = stream.tasks[t - 1];
        grow_model(model, t, derive_seed(opts.seed, kGrowStream));
        const TrainLog log = train_task(model, task, opts.optim, derive_seed(opts.seed, kTrainStream, t));
        if (opts.on_train_log) opts.on_train_log(t, log);
        DenseVector row(num_tasks);
        for (std::size_t j = 0; j < num_tasks; ++j) row[j] = evaluate_accuracy(model, tests[j]);
        result.acc.rows.push_back(std::move(row));
        if (opts.on_task_done) opts.on_task_done(model, result.acc, t);
    }
    result.model = std::move(model);
    return result;
}

}  // namespace mora
