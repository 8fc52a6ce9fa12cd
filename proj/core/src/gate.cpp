// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/gate.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace mora {

namespace {

constexpr std::array<std::pair<GateMode, std::string_view>, 6> kModeNames{{
    {GateMode::Dense, "dense"},
    {GateMode::RouterLoRA, "router_lora"},
    {GateMode::RouterRank, "router_rank"},
    {GateMode::SelfRaw, "self_raw"},
    {GateMode::SelfSparse, "self_sparse"},
    {GateMode::SelfAdaptive, "self_adaptive"},
}};

IndexSet all_indices(std::size_t n) {
    IndexSet idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

std::string_view to_string(GateMode mode) {
    for (const auto& [m, name] : kModeNames)
        if (m == mode) return name;
    return "unknown";
}

std::optional<GateMode> parse_gate_mode(std::string_view name) {
    for (const auto& [m, n] : kModeNames)
        if (n == name) return m;
    return std::nullopt;
}

bool is_router_mode(GateMode mode) noexcept { return mode == GateMode::RouterLoRA || mode == GateMode::RouterRank; }

void validate(const GateConfig& cfg) {
    if (!(cfg.tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be positive");
    if (cfg.budget_k == 0) throw Error(ErrorCode::InvalidConfig, "budget_k must be at least 1");
    if (!(cfg.eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "eps must be positive");
    if (!(cfg.delta >= 0.0)) throw Error(ErrorCode::InvalidConfig, "delta must be non-negative");
}

RawScores normalize_activations(DenseVector a, double eps) {
    RawScores out;
    double sq = 0.0;
    for (double e : a) sq += e * e;
    out.n = std::sqrt(sq + eps);
    out.s.resize(a.size());
    // n == 0 only when a == 0 and eps == 0; the scores are then defined as 0.
    for (std::size_t i = 0; i < a.size(); ++i) out.s[i] = out.n > 0.0 ? a[i] / out.n : 0.0;
    out.a = std::move(a);
    return out;
}

RawScores raw_scores(const DenseMatrix& keys, std::span<const double> x, double eps) {
    return normalize_activations(matvec(keys, x), eps);
}

DenseVector apply_budget(std::span<const double> s, std::size_t k) {
    const IndexSet keep = topk_indices(s, k);
    DenseVector out(s.size(), kNegInf);
    for (std::size_t i : keep) out[i] = s[i];
    return out;
}

DenseVector gate_weights(std::span<const double> masked_s, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be positive");
    DenseVector scaled(masked_s.begin(), masked_s.end());
    for (double& e : scaled)
        if (e != kNegInf) e /= tau;
    return stable_softmax(scaled);
}

DenseVector prune(std::span<const double> w, std::span<const double> s, double delta) {
    if (w.size() != s.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "prune: weights of length " + std::to_string(w.size()) + ", scores of length " + std::to_string(s.size()));
    }
    DenseVector out(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        if (s[i] >= delta) out[i] = w[i];
    return out;
}

GateTrace gate_from_activations(DenseVector activations, const GateConfig& cfg) {
    validate(cfg);
    if (is_router_mode(cfg.mode)) {
        throw Error(ErrorCode::WrongMode, std::string("gate mode ") + std::string(to_string(cfg.mode)) +
                                              " is router-based; use the baselines module");
    }
    if (activations.empty()) throw Error(ErrorCode::InvalidDims, "gate over zero ranks");

    RawScores rs = normalize_activations(std::move(activations), cfg.eps);
    const std::size_t r = rs.s.size();

    GateTrace t;
    t.activations_a = std::move(rs.a);
    t.norm_n = rs.n;
    t.raw_scores_s = std::move(rs.s);
    t.prune_mask_m.assign(r, 1);

    switch (cfg.mode) {
        case GateMode::Dense:
            t.topk_set = all_indices(r);
            t.softmax_w.assign(r, 1.0);
            t.final_w.assign(r, 1.0);
            break;
        case GateMode::SelfRaw:
            t.topk_set = all_indices(r);
            t.softmax_w = cfg.raw_softmax ? stable_softmax(t.raw_scores_s) : t.raw_scores_s;
            t.final_w = t.softmax_w;
            break;
        case GateMode::SelfSparse:
        case GateMode::SelfAdaptive: {
            const DenseVector masked = apply_budget(t.raw_scores_s, cfg.budget_k);
            t.topk_set = topk_indices(t.raw_scores_s, cfg.budget_k);
            t.softmax_w = gate_weights(masked, cfg.tau);
            if (cfg.mode == GateMode::SelfAdaptive) {
                for (std::size_t i = 0; i < r; ++i) t.prune_mask_m[i] = t.raw_scores_s[i] >= cfg.delta ? 1 : 0;
                t.final_w = prune(t.softmax_w, t.raw_scores_s, cfg.delta);
            } else {
                t.final_w = t.softmax_w;
            }
            break;
        }
        case GateMode::RouterLoRA:
        case GateMode::RouterRank:
            break;  // rejected above
    }
    return t;
}

GateTrace gate_pipeline(const DenseMatrix& keys, std::span<const double> x, const GateConfig& cfg) {
    return gate_from_activations(matvec(keys, x), cfg);
}

}  // namespace mora
