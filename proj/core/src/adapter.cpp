// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace mora {

AdaptedLinear::AdaptedLinear(DenseMatrix base, GateConfig gate, std::size_t r_per_task)
    : w0(std::move(base)), cfg(gate) {
    validate(cfg);
    pool.r_per_task = r_per_task;
}

DenseMatrix AdaptedLinear::key_matrix() const {
    DenseMatrix keys(pool.size(), d_in());
    for (std::size_t i = 0; i < pool.size(); ++i) std::ranges::copy(pool.units[i].key_a, keys.row(i).begin());
    return keys;
}

DenseMatrix AdaptedLinear::value_matrix() const {
    DenseMatrix values(d_out(), pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        for (std::size_t o = 0; o < d_out(); ++o) values(o, i) = pool.units[i].value_b[o];
    return values;
}

DenseVector rank_activations(const RankPool& pool, std::span<const double> x) {
    DenseVector a(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) a[i] = dot(pool.units[i].key_a, x);
    return a;
}

DenseVector mix_values(const AdaptedLinear& layer, std::span<const double> x, std::span<const double> activations,
                       std::span<const double> weights) {
    DenseVector y = matvec(layer.w0, x);
    for (std::size_t i = 0; i < layer.pool.size(); ++i) {
        if (weights[i] == 0.0) continue;
        axpy(weights[i] * activations[i], layer.pool.units[i].value_b, y);
    }
    return y;
}

AdapterOutput adapter_forward(const AdaptedLinear& layer, std::span<const double> x) {
    if (x.size() != layer.d_in()) {
        throw Error(ErrorCode::DimensionMismatch, "adapter input of length " + std::to_string(x.size()) +
                                                      ", layer expects " + std::to_string(layer.d_in()));
    }
    AdapterOutput out;
    if (layer.pool.empty()) {
        out.y = matvec(layer.w0, x);
        return out;
    }
    out.trace = gate_from_activations(rank_activations(layer.pool, x), layer.cfg);
    out.y = mix_values(layer, x, out.trace.activations_a, out.trace.final_w);
    return out;
}

DenseVector gate_backward(const GateConfig& cfg, const GateTrace& trace, std::span<const double> d_final_w) {
    const std::size_t r = trace.size();
    DenseVector d_a(r, 0.0);
    if (cfg.mode == GateMode::Dense) return d_a;

    DenseVector d_s(r, 0.0);
    if (cfg.mode == GateMode::SelfRaw && !cfg.raw_softmax) {
        std::ranges::copy(d_final_w, d_s.begin());
    } else {
        const double tau = cfg.mode == GateMode::SelfRaw ? 1.0 : cfg.tau;
        // Pruning mask is constant; entries outside the top-k set have p == 0
        // and therefore receive no gradient through the softmax.
        DenseVector d_p(r);
        for (std::size_t i = 0; i < r; ++i) d_p[i] = trace.prune_mask_m[i] ? d_final_w[i] : 0.0;
        const auto& p = trace.softmax_w;
        const double mean = dot(p, d_p);
        for (std::size_t i = 0; i < r; ++i) d_s[i] = p[i] * (d_p[i] - mean) / tau;
    }

    // s_i = a_i / n  =>  ds_i/da_j = delta_ij / n - a_i a_j / n^3
    const double n = trace.norm_n;
    if (n == 0.0) return d_a;
    const double proj = dot(d_s, trace.activations_a);
    const double n3 = n * n * n;
    for (std::size_t j = 0; j < r; ++j) d_a[j] = d_s[j] / n - trace.activations_a[j] * proj / n3;
    return d_a;
}

AdapterGrads adapter_backward(const AdaptedLinear& layer, std::span<const double> x, const GateTrace& trace,
                              std::span<const double> dy) {
    const std::size_t r = layer.pool.size();
    if (x.size() != layer.d_in() || dy.size() != layer.d_out()) {
        throw Error(ErrorCode::DimensionMismatch, "adapter_backward: input or upstream gradient has the wrong length");
    }
    if (trace.size() != r || trace.activations_a.size() != r) {
        throw Error(ErrorCode::TraceMismatch, "trace covers " + std::to_string(trace.size()) + " ranks, pool has " +
                                                  std::to_string(r));
    }

    AdapterGrads grads;
    grads.d_x = matvec_transposed(layer.w0, dy);
    grads.d_key_a.resize(r);
    grads.d_value_b.resize(r);
    if (r == 0) return grads;

    DenseVector g(r);
    DenseVector d_w(r);
    for (std::size_t i = 0; i < r; ++i) {
        g[i] = dot(layer.pool.units[i].value_b, dy);
        d_w[i] = trace.activations_a[i] * g[i];
    }
    DenseVector d_a = gate_backward(layer.cfg, trace, d_w);
    for (std::size_t i = 0; i < r; ++i) d_a[i] += trace.final_w[i] * g[i];

    for (std::size_t i = 0; i < r; ++i) {
        const RankUnit& unit = layer.pool.units[i];
        if (d_a[i] != 0.0) axpy(d_a[i], unit.key_a, grads.d_x);
        if (unit.frozen) continue;
        grads.d_key_a[i].assign(x.begin(), x.end());
        for (double& e : grads.d_key_a[i]) e *= d_a[i];
        grads.d_value_b[i].assign(dy.begin(), dy.end());
        const double scale = trace.final_w[i] * trace.activations_a[i];
        for (double& e : grads.d_value_b[i]) e *= scale;
    }
    return grads;
}

void grow(RankPool& pool, std::size_t r_new, std::size_t task_id, std::size_t d_in, std::size_t d_out,
          std::uint64_t rng_seed) {
    if (task_id <= pool.last_task()) {
        throw Error(ErrorCode::NonMonotonicTask, "task id " + std::to_string(task_id) +
                                                     " does not exceed existing task id " +
                                                     std::to_string(pool.last_task()));
    }
    if (d_in == 0 || d_out == 0) throw Error(ErrorCode::InvalidDims, "grow: zero layer dimension");
    for (auto& unit : pool.units) unit.frozen = true;

    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> key_dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
    for (std::size_t i = 0; i < r_new; ++i) {
        RankUnit unit;
        unit.key_a.resize(d_in);
        for (double& e : unit.key_a) e = key_dist(rng);
        unit.value_b.assign(d_out, 0.0);
        unit.task_id = task_id;
        pool.units.push_back(std::move(unit));
    }
}

ParamCounts param_counts(const AdaptedLinear& layer) {
    const std::size_t r = layer.pool.r_per_task;
    const bool budgeted = layer.cfg.mode == GateMode::SelfSparse || layer.cfg.mode == GateMode::SelfAdaptive;
    const std::size_t k = budgeted ? std::min(layer.cfg.budget_k, r) : r;
    return {r * (layer.d_in() + layer.d_out()), r * layer.d_in() + k * layer.d_out()};
}

}  // namespace mora
