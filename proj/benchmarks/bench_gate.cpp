// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "mora/gate.hpp"

namespace {

mora::DenseVector random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    mora::DenseVector v(n);
    for (double& e : v) e = normal(rng);
    return v;
}

// Gate over r rank activations with budget k = r / 4.
void BM_GateFromActivations(benchmark::State& state) {
    const auto r = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const mora::DenseVector a = random_vector(r, rng);
    mora::GateConfig cfg;
    cfg.budget_k = std::max<std::size_t>(1, r / 4);
    for (auto _ : state) benchmark::DoNotOptimize(mora::gate_from_activations(a, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(r));
}
BENCHMARK(BM_GateFromActivations)->RangeMultiplier(4)->Range(16, 1024);

void BM_TopK(benchmark::State& state) {
    const auto r = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(2);
    const mora::DenseVector s = random_vector(r, rng);
    for (auto _ : state) benchmark::DoNotOptimize(mora::topk_indices(s, r / 4 + 1));
}
BENCHMARK(BM_TopK)->RangeMultiplier(4)->Range(16, 1024);

}  // namespace
