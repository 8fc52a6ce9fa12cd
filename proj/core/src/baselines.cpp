// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/baselines.hpp"

#include <array>
#include <string>
#include <utility>

namespace mora {

void grow_router(RouterParams& router, std::size_t new_experts) {
    if (router.d_in == 0) throw Error(ErrorCode::InvalidDims, "router input dimension is zero");
    for (std::size_t e = 0; e < new_experts; ++e) {
        if (router.w_r.empty()) {
            router.w_r = DenseMatrix(router.d_in, 1);
        } else {
            router.w_r.append_zero_column();
        }
    }
}

std::vector<UnitRange> expert_ranges(const RankPool& pool, GateMode mode) {
    std::vector<UnitRange> ranges;
    if (mode == GateMode::RouterRank) {
        for (std::size_t i = 0; i < pool.size(); ++i) ranges.push_back({i, i + 1});
        return ranges;
    }
    if (mode != GateMode::RouterLoRA) {
        throw Error(ErrorCode::WrongMode, std::string("no router experts for gate mode ") + std::string(to_string(mode)));
    }
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= pool.size(); ++i) {
        if (i == pool.size() || pool.units[i].task_id != pool.units[begin].task_id) {
            ranges.push_back({begin, i});
            begin = i;
        }
    }
    return ranges;
}

namespace {

void check_router(const AdaptedLinear& layer, const RouterParams& router, std::span<const UnitRange> experts,
                  std::span<const double> x) {
    if (x.size() != layer.d_in()) {
        throw Error(ErrorCode::DimensionMismatch, "router input of length " + std::to_string(x.size()) +
                                                      ", layer expects " + std::to_string(layer.d_in()));
    }
    if (router.experts() != experts.size() || (!experts.empty() && router.w_r.rows() != layer.d_in())) {
        throw Error(ErrorCode::DimensionMismatch, "router has " + std::to_string(router.experts()) +
                                                      " columns for " + std::to_string(experts.size()) + " experts");
    }
    for (const auto& e : experts) {
        if (e.begin >= e.end || e.end > layer.pool.size()) {
            throw Error(ErrorCode::DimensionMismatch, "expert range outside the rank pool");
        }
    }
}

}  // namespace

RoutedOutput routed_forward(const AdaptedLinear& layer, const RouterParams& router,
                            std::span<const UnitRange> experts, std::span<const double> x, std::size_t k) {
    check_router(layer, router, experts, x);
    RoutedOutput out;
    if (experts.empty()) {
        out.y = matvec(layer.w0, x);
        return out;
    }
    RoutedTrace& t = out.trace;
    t.activations = rank_activations(layer.pool, x);
    t.logits = matvec_transposed(router.w_r, x);
    t.topk_set = topk_indices(t.logits, k);

    DenseVector masked(t.logits.size(), kNegInf);
    for (std::size_t e : t.topk_set) masked[e] = t.logits[e];
    t.weights = stable_softmax(masked);

    DenseVector unit_w(layer.pool.size(), 0.0);
    for (std::size_t e : t.topk_set)
        for (std::size_t i = experts[e].begin; i < experts[e].end; ++i) unit_w[i] = t.weights[e];
    out.y = mix_values(layer, x, t.activations, unit_w);
    return out;
}

RoutedGrads routed_backward(const AdaptedLinear& layer, const RouterParams& router,
                            std::span<const UnitRange> experts, std::span<const double> x, const RoutedTrace& trace,
                            std::span<const double> dy) {
    check_router(layer, router, experts, x);
    if (dy.size() != layer.d_out()) throw Error(ErrorCode::DimensionMismatch, "upstream gradient has the wrong length");
    const std::size_t r = layer.pool.size();
    if (trace.activations.size() != r || trace.weights.size() != experts.size()) {
        throw Error(ErrorCode::TraceMismatch, "routed trace does not match the layer");
    }

    RoutedGrads grads;
    AdapterGrads& ag = grads.adapter;
    ag.d_x = matvec_transposed(layer.w0, dy);
    ag.d_key_a.resize(r);
    ag.d_value_b.resize(r);
    if (experts.empty()) return grads;
    grads.d_w_r = DenseMatrix(router.w_r.rows(), router.w_r.cols());

    DenseVector d_weight(experts.size(), 0.0);
    for (std::size_t e : trace.topk_set) {
        const double p = trace.weights[e];
        for (std::size_t i = experts[e].begin; i < experts[e].end; ++i) {
            const RankUnit& unit = layer.pool.units[i];
            const double g = dot(unit.value_b, dy);
            const double a = trace.activations[i];
            d_weight[e] += a * g;
            const double d_a = p * g;
            if (d_a != 0.0) axpy(d_a, unit.key_a, ag.d_x);
            if (unit.frozen) continue;
            ag.d_key_a[i].assign(x.begin(), x.end());
            for (double& v : ag.d_key_a[i]) v *= d_a;
            ag.d_value_b[i].assign(dy.begin(), dy.end());
            for (double& v : ag.d_value_b[i]) v *= p * a;
        }
    }
    for (std::size_t i = 0; i < r; ++i) {
        if (layer.pool.units[i].frozen || !ag.d_key_a[i].empty()) continue;
        ag.d_key_a[i].assign(layer.d_in(), 0.0);
        ag.d_value_b[i].assign(layer.d_out(), 0.0);
    }

    const double mean = dot(trace.weights, d_weight);
    DenseVector d_logit(experts.size(), 0.0);
    for (std::size_t e : trace.topk_set) d_logit[e] = trace.weights[e] * (d_weight[e] - mean);
    for (std::size_t row = 0; row < router.w_r.rows(); ++row) {
        for (std::size_t e : trace.topk_set) grads.d_w_r(row, e) = x[row] * d_logit[e];
    }
    const DenseVector via_router = matvec(router.w_r, d_logit);
    axpy(1.0, via_router, ag.d_x);
    return grads;
}

RoutedOutput moe_lora_forward(const DenseMatrix& w0, std::span<const LoraExpert> experts,
                              const RouterParams& router, std::span<const double> x, std::size_t k) {
    AdaptedLinear layer;
    layer.w0 = w0;
    layer.cfg.mode = GateMode::RouterLoRA;
    std::vector<UnitRange> ranges;
    for (std::size_t e = 0; e < experts.size(); ++e) {
        const LoraExpert& ex = experts[e];
        if (ex.a.cols() != w0.cols() || ex.b.rows() != w0.rows() || ex.a.rows() != ex.b.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "expert " + std::to_string(e) + " does not match the base matrix");
        }
        const std::size_t begin = layer.pool.size();
        for (std::size_t i = 0; i < ex.a.rows(); ++i) {
            RankUnit unit;
            unit.key_a.assign(ex.a.row(i).begin(), ex.a.row(i).end());
            unit.value_b.resize(ex.b.rows());
            for (std::size_t o = 0; o < ex.b.rows(); ++o) unit.value_b[o] = ex.b(o, i);
            unit.task_id = e + 1;
            layer.pool.units.push_back(std::move(unit));
        }
        ranges.push_back({begin, layer.pool.size()});
    }
    return routed_forward(layer, router, ranges, x, k);
}

RoutedOutput rank_router_forward(const AdaptedLinear& layer, const RouterParams& router, std::span<const double> x,
                                 std::size_t k) {
    const auto ranges = expert_ranges(layer.pool, GateMode::RouterRank);
    return routed_forward(layer, router, ranges, x, k);
}

RoutedOutput router_lora_forward(const AdaptedLinear& layer, const RouterParams& router, std::span<const double> x,
                                 std::size_t k) {
    const auto ranges = expert_ranges(layer.pool, GateMode::RouterLoRA);
    return routed_forward(layer, router, ranges, x, k);
}

std::size_t moe_lora_param_count(std::size_t r, std::size_t d_in, std::size_t d_out) {
    return r * (d_in + d_out) + d_in;
}

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 7> kMethodNames{{
    {Method::SelfAdaptive, "self_adaptive"},
    {Method::SelfSparse, "self_sparse"},
    {Method::SelfRaw, "self_raw"},
    {Method::RouterLoRA, "router_lora"},
    {Method::RouterRank, "router_rank"},
    {Method::IncLoRA, "inc_lora"},
    {Method::SeqLoRA, "seq_lora"},
}};

constexpr std::array<Method, 7> kAllMethods{Method::SelfAdaptive, Method::SelfSparse, Method::SelfRaw,
                                            Method::RouterLoRA,   Method::RouterRank, Method::IncLoRA,
                                            Method::SeqLoRA};

}  // namespace

MethodConfig dense_baseline_mode(DenseVariant variant) {
    return {GateMode::Dense, variant == DenseVariant::IncLoRA};
}

MethodConfig method_config(Method method) {
    switch (method) {
        case Method::SelfAdaptive: return {GateMode::SelfAdaptive, true};
        case Method::SelfSparse: return {GateMode::SelfSparse, true};
        case Method::SelfRaw: return {GateMode::SelfRaw, true};
        case Method::RouterLoRA: return {GateMode::RouterLoRA, true};
        case Method::RouterRank: return {GateMode::RouterRank, true};
        case Method::IncLoRA: return dense_baseline_mode(DenseVariant::IncLoRA);
        case Method::SeqLoRA: return dense_baseline_mode(DenseVariant::SeqLoRA);
    }
    return {};
}

std::string_view to_string(Method method) {
    for (const auto& [m, name] : kMethodNames)
        if (m == method) return name;
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
    for (const auto& [m, n] : kMethodNames)
        if (n == name) return m;
    if (name == "dense") return Method::IncLoRA;
    return std::nullopt;
}

std::span<const Method> all_methods() { return kAllMethods; }

}  // namespace mora
