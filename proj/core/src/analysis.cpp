// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace mora {

ActivationProfile activation_profile(const ToyModel& model, std::span<const DenseVector> inputs) {
    if (inputs.empty()) throw Error(ErrorCode::EmptyDataset, "activation profile over an empty dataset");
    ActivationProfile profile;
    profile.samples = inputs.size();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const RankPool& pool = model.layers[l].adapted.pool;
        LayerProfile lp;
        lp.layer = l;
        lp.mean_abs_weight.assign(pool.size(), 0.0);
        lp.frequency.assign(pool.size(), 0.0);
        for (const auto& unit : pool.units) lp.owner_task.push_back(unit.task_id);
        profile.layers.push_back(std::move(lp));
    }

    for (const auto& x : inputs) {
        const ForwardCache cache = model_forward(model, x);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            LayerProfile& lp = profile.layers[l];
            if (lp.mean_abs_weight.empty()) continue;
            const DenseVector w = cache.traces[l].unit_weights(model.layers[l], model.method.gate);
            for (std::size_t i = 0; i < w.size(); ++i) {
                lp.mean_abs_weight[i] += std::abs(w[i]);
                if (w[i] != 0.0) lp.frequency[i] += 1.0;
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(inputs.size());
    for (auto& lp : profile.layers) {
        for (double& e : lp.mean_abs_weight) e *= inv;
        for (double& e : lp.frequency) e *= inv;
    }
    return profile;
}

std::size_t coverage_count(std::span<const double> mean_activation, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::InvalidConfig, "coverage fraction must lie in (0, 1]");
    DenseVector sorted(mean_activation.begin(), mean_activation.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double total = 0.0;
    for (double e : sorted) total += e;
    if (!(total > 0.0)) return 0;
    // Relative slack absorbs summation rounding when fraction * total is hit exactly.
    const double target = fraction * total * (1.0 - 1e-12);
    double prefix = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        prefix += sorted[i];
        if (prefix >= target) return i + 1;
    }
    return sorted.size();
}

std::vector<std::size_t> coverage_count(const ActivationProfile& profile, double fraction) {
    std::vector<std::size_t> out;
    for (const auto& lp : profile.layers) out.push_back(coverage_count(lp.mean_abs_weight, fraction));
    return out;
}

std::vector<DenseVector> reuse_matrix(const ToyModel& model, std::span<const Batch> per_task_data) {
    const std::size_t num_tasks = per_task_data.size();
    std::vector<DenseVector> reuse(num_tasks, DenseVector(num_tasks, 0.0));
    for (std::size_t t = 0; t < num_tasks; ++t) {
        DenseVector& row = reuse[t];
        for (const auto& x : per_task_data[t].inputs) {
            const ForwardCache cache = model_forward(model, x);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                const auto& units = model.layers[l].adapted.pool.units;
                if (units.empty()) continue;
                const DenseVector w = cache.traces[l].unit_weights(model.layers[l], model.method.gate);
                for (std::size_t i = 0; i < units.size(); ++i) {
                    const std::size_t owner = units[i].task_id;
                    if (owner >= 1 && owner <= num_tasks) row[owner - 1] += std::abs(w[i]);
                }
            }
        }
        double total = 0.0;
        for (double e : row) total += e;
        if (total > 0.0)
            for (double& e : row) e /= total;
    }
    return reuse;
}

double gate_entropy(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += std::abs(w);
    if (!(total > 0.0)) return 0.0;
    double h = 0.0;
    for (double w : weights) {
        const double p = std::abs(w) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double gate_entropy(const GateTrace& trace) { return gate_entropy(trace.final_w); }

std::vector<ParamReportRow> param_report(const ToyModel& model) {
    std::vector<ParamReportRow> rows;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (!model.is_adapted(l)) continue;
        const AdaptedLinear& a = model.layers[l].adapted;
        const std::size_t r = a.pool.r_per_task;
        ParamReportRow row;
        row.layer = l;
        row.d_in = a.d_in();
        row.d_out = a.d_out();
        row.counts = param_counts(a);
        row.lora = r * (a.d_in() + a.d_out());
        row.moe_lora = moe_lora_param_count(r, a.d_in(), a.d_out());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mora
