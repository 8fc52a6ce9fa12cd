// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference checks for the adapter and router backward passes.
// The scalar loss is L = c . y for a fixed random c, so dL/dy = c.

#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "mora/adapter.hpp"
#include "mora/baselines.hpp"
#include "support/oracles.hpp"

namespace mora::testing {

struct GradCheck {
    bool screened_out = false;  // a perturbation flipped a mask
    double rel_error = 0.0;     // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    std::size_t components = 0;
};

/// Accumulates analytic/numeric pairs and reports the norm-wise relative error.
class GradAccumulator {
public:
    void add(double analytic, double numeric) {
        diff_ += (analytic - numeric) * (analytic - numeric);
        a_ += analytic * analytic;
        n_ += numeric * numeric;
        ++count_;
    }
    GradCheck result() const {
        GradCheck g;
        const double denom = std::max(std::sqrt(a_), std::sqrt(n_));
        g.rel_error = denom > 0.0 ? std::sqrt(diff_) / denom : 0.0;
        g.components = count_;
        return g;
    }

private:
    double diff_ = 0.0, a_ = 0.0, n_ = 0.0;
    std::size_t count_ = 0;
};

/// Perturbs *p by +-h, evaluates `loss` (which returns nullopt when a mask
/// changed) and restores the value.
template <class Loss>
std::optional<double> central_difference(double* p, double h, Loss&& loss) {
    const double saved = *p;
    *p = saved + h;
    const auto up = loss();
    *p = saved - h;
    const auto down = loss();
    *p = saved;
    if (!up || !down) return std::nullopt;
    return (*up - *down) / (2.0 * h);
}

/// Random self-gated layer: the first `frozen` units belong to task 1 and are
/// frozen, the rest to task 2. Values are random so every path is exercised.
inline AdaptedLinear random_adapted_layer(std::size_t d_in, std::size_t d_out, std::size_t r, std::size_t frozen,
                                          const GateConfig& cfg, std::mt19937_64& rng) {
    AdaptedLinear layer(gaussian_matrix(d_out, d_in, rng, 0.5), cfg, r);
    for (std::size_t i = 0; i < r; ++i) {
        RankUnit u;
        u.key_a = gaussian_vector(d_in, rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
        u.value_b = gaussian_vector(d_out, rng, 0.5);
        u.task_id = i < frozen ? 1 : 2;
        u.frozen = i < frozen;
        layer.pool.units.push_back(std::move(u));
    }
    return layer;
}

inline bool same_masks(const GateTrace& a, const GateTrace& b) {
    return a.topk_set == b.topk_set && a.prune_mask_m == b.prune_mask_m;
}

/// Checks adapter_backward against central differences for every key, value
/// and input component, including frozen units (whose analytic gradient is
/// then recomputed with the unit unfrozen).
inline GradCheck check_adapter_gradients(AdaptedLinear layer, DenseVector x, const DenseVector& c, double h) {
    for (auto& u : layer.pool.units) u.frozen = false;
    const AdapterOutput ref = adapter_forward(layer, x);
    const AdapterGrads g = adapter_backward(layer, x, ref.trace, c);

    auto loss = [&]() -> std::optional<double> {
        const AdapterOutput out = adapter_forward(layer, x);
        if (!same_masks(out.trace, ref.trace)) return std::nullopt;
        return dot(c, out.y);
    };

    GradAccumulator acc;
    for (std::size_t i = 0; i < layer.pool.size(); ++i) {
        for (std::size_t j = 0; j < layer.d_in(); ++j) {
            const auto fd = central_difference(&layer.pool.units[i].key_a[j], h, loss);
            if (!fd) return {true, 0.0, 0};
            acc.add(g.d_key_a[i][j], *fd);
        }
        for (std::size_t o = 0; o < layer.d_out(); ++o) {
            const auto fd = central_difference(&layer.pool.units[i].value_b[o], h, loss);
            if (!fd) return {true, 0.0, 0};
            acc.add(g.d_value_b[i][o], *fd);
        }
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        const auto fd = central_difference(&x[j], h, loss);
        if (!fd) return {true, 0.0, 0};
        acc.add(g.d_x[j], *fd);
    }
    return acc.result();
}

/// Same check for the router baselines: keys, values, router matrix and input.
inline GradCheck check_router_gradients(AdaptedLinear layer, RouterParams router, GateMode mode, DenseVector x,
                                        const DenseVector& c, std::size_t k, double h) {
    for (auto& u : layer.pool.units) u.frozen = false;
    const std::vector<UnitRange> experts = expert_ranges(layer.pool, mode);
    const RoutedOutput ref = routed_forward(layer, router, experts, x, k);
    const RoutedGrads g = routed_backward(layer, router, experts, x, ref.trace, c);

    auto loss = [&]() -> std::optional<double> {
        const RoutedOutput out = routed_forward(layer, router, experts, x, k);
        if (out.trace.topk_set != ref.trace.topk_set) return std::nullopt;
        return dot(c, out.y);
    };

    GradAccumulator acc;
    for (std::size_t i = 0; i < layer.pool.size(); ++i) {
        for (std::size_t j = 0; j < layer.d_in(); ++j) {
            const auto fd = central_difference(&layer.pool.units[i].key_a[j], h, loss);
            if (!fd) return {true, 0.0, 0};
            acc.add(g.adapter.d_key_a[i][j], *fd);
        }
        for (std::size_t o = 0; o < layer.d_out(); ++o) {
            const auto fd = central_difference(&layer.pool.units[i].value_b[o], h, loss);
            if (!fd) return {true, 0.0, 0};
            acc.add(g.adapter.d_value_b[i][o], *fd);
        }
    }
    for (std::size_t r = 0; r < router.w_r.rows(); ++r) {
        for (std::size_t e = 0; e < router.w_r.cols(); ++e) {
            const auto fd = central_difference(&router.w_r(r, e), h, loss);
            if (!fd) return {true, 0.0, 0};
            acc.add(g.d_w_r(r, e), *fd);
        }
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        const auto fd = central_difference(&x[j], h, loss);
        if (!fd) return {true, 0.0, 0};
        acc.add(g.adapter.d_x[j], *fd);
    }
    return acc.result();
}

/// Random router over the pool with non-trivial logits.
inline RouterParams random_router(std::size_t d_in, std::size_t experts, std::mt19937_64& rng) {
    RouterParams router;
    router.d_in = d_in;
    router.w_r = gaussian_matrix(d_in, experts, rng, 1.0);
    return router;
}

}  // namespace mora::testing
