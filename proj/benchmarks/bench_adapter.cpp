// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "mora/adapter.hpp"

namespace {

// d x d layer with `tasks` pools of 16 ranks, values filled so the rank path
// does real work.
mora::AdaptedLinear make_layer(std::size_t d, std::size_t tasks) {
    mora::GateConfig cfg;
    mora::AdaptedLinear layer(mora::DenseMatrix::identity(d), cfg, 16);
    for (std::size_t t = 1; t <= tasks; ++t) mora::grow(layer.pool, 16, t, d, d, 7);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (auto& u : layer.pool.units)
        for (double& v : u.value_b) v = normal(rng);
    for (auto& u : layer.pool.units) u.frozen = false;
    return layer;
}

mora::DenseVector input(std::size_t d) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    mora::DenseVector x(d);
    for (double& e : x) e = normal(rng);
    return x;
}

void BM_AdapterForward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto layer = make_layer(d, static_cast<std::size_t>(state.range(1)));
    const auto x = input(d);
    for (auto _ : state) benchmark::DoNotOptimize(mora::adapter_forward(layer, x));
}
BENCHMARK(BM_AdapterForward)->Args({32, 5})->Args({128, 5})->Args({128, 20});

void BM_AdapterBackward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto layer = make_layer(d, static_cast<std::size_t>(state.range(1)));
    const auto x = input(d);
    const auto out = mora::adapter_forward(layer, x);
    const auto dy = input(d);
    for (auto _ : state) benchmark::DoNotOptimize(mora::adapter_backward(layer, x, out.trace, dy));
}
BENCHMARK(BM_AdapterBackward)->Args({32, 5})->Args({128, 5})->Args({128, 20});

}  // namespace
