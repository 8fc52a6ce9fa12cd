// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mora/analysis.hpp"
#include "support/oracles.hpp"

namespace mora {
namespace {

StreamConfig small_stream(std::size_t tasks = 3, double shift = 2.0) {
    StreamConfig s;
    s.num_tasks = tasks;
    s.classes_per_task = 2;
    s.dim = 8;
    s.shared_dim = 2;
    s.shift_strength = shift;
    s.test_size = 64;
    return s;
}

// Untrained model with one pool per task and random values.
ToyModel grown(const TaskStream& stream, Method method, std::size_t k, std::uint64_t seed) {
    ArchConfig arch;
    arch.hidden = {8};
    arch.r_per_task = 4;
    arch.method = method;
    arch.gate.mode = method_config(method).gate;
    arch.gate.budget_k = k;
    PretrainConfig none;
    none.steps = 0;
    ToyModel model = pretrain_base(arch, stream, none, seed);
    for (std::size_t t = 1; t <= stream.config.num_tasks; ++t) grow_model(model, t, seed);
    std::mt19937_64 rng(seed);
    for (auto& layer : model.layers)
        for (auto& u : layer.adapted.pool.units) u.value_b = testing::gaussian_vector(u.value_b.size(), rng, 0.3);
    return model;
}

std::vector<DenseVector> inputs_of(const TaskStream& s) {
    std::vector<DenseVector> all;
    for (const TaskSpec& t : s.tasks) {
        const Batch b = test_split(t);
        all.insert(all.end(), b.inputs.begin(), b.inputs.end());
    }
    return all;
}

std::vector<Batch> batches_of(const TaskStream& s) {
    std::vector<Batch> out;
    for (const TaskSpec& t : s.tasks) out.push_back(test_split(t));
    return out;
}

TEST(ActivationProfile, DenseRanksFireOnEveryInput) {
    const TaskStream s = make_stream(small_stream());
    const ToyModel model = grown(s, Method::IncLoRA, 16, 1);
    const ActivationProfile p = activation_profile(model, inputs_of(s));
    EXPECT_EQ(p.samples, 3u * 64);
    for (const LayerProfile& l : p.layers) {
        ASSERT_EQ(l.frequency.size(), 12u);
        for (double f : l.frequency) EXPECT_EQ(f, 1.0);
        for (double w : l.mean_abs_weight) EXPECT_EQ(w, 1.0);
    }
}

TEST(ActivationProfile, BudgetBoundsFiringRanks) {
    const TaskStream s = make_stream(small_stream());
    for (std::size_t k : {1u, 2u, 5u}) {
        const ToyModel model = grown(s, Method::SelfSparse, k, 2);
        const ActivationProfile p = activation_profile(model, inputs_of(s));
        for (const LayerProfile& l : p.layers) {
            const double fired = std::accumulate(l.frequency.begin(), l.frequency.end(), 0.0);
            EXPECT_LE(fired, static_cast<double>(k) + 1e-12);
            EXPECT_EQ(l.owner_task.size(), 12u);
            EXPECT_EQ(l.owner_task[11], 3u);
        }
    }
}

TEST(ActivationProfile, SingleRankFiresAlways) {
    TaskStream s = make_stream(small_stream(1));
    ArchConfig arch;
    arch.hidden = {8};
    arch.r_per_task = 1;
    arch.gate.budget_k = 1;
    arch.gate.delta = 0.0;
    arch.gate.mode = GateMode::SelfSparse;
    arch.method = Method::SelfSparse;
    PretrainConfig none;
    none.steps = 0;
    ToyModel model = pretrain_base(arch, s, none, 3);
    grow_model(model, 1, 3);
    const ActivationProfile p = activation_profile(model, inputs_of(s));
    for (const LayerProfile& l : p.layers) EXPECT_EQ(l.frequency, (DenseVector{1.0}));
}

TEST(ActivationProfile, EmptyDatasetRejected) {
    const TaskStream s = make_stream(small_stream());
    const ToyModel model = grown(s, Method::SelfAdaptive, 2, 4);
    try {
        activation_profile(model, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyDataset);
    }
}

TEST(ActivationProfile, LeavesModelUntouched) {
    const TaskStream s = make_stream(small_stream());
    const ToyModel model = grown(s, Method::SelfAdaptive, 2, 5);
    const ToyModel copy = model;
    activation_profile(model, inputs_of(s));
    reuse_matrix(model, batches_of(s));
    EXPECT_EQ(model, copy);
}

TEST(Coverage, UniformNeedsCeilOfFraction) {
    for (std::size_t r : {1u, 4u, 16u, 50u, 100u}) {
        const DenseVector w(r, 0.3);
        EXPECT_EQ(coverage_count(w, 0.99), static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(r))));
        EXPECT_EQ(coverage_count(w, 0.5), static_cast<std::size_t>(std::ceil(0.5 * static_cast<double>(r))));
    }
}

TEST(Coverage, DominantRankAlone) {
    DenseVector w(20, 1e-6);
    w[7] = 1.0;
    EXPECT_EQ(coverage_count(w, 0.99), 1u);
}

TEST(Coverage, EdgeCases) {
    EXPECT_EQ(coverage_count(DenseVector(5, 0.0)), 0u);
    EXPECT_EQ(coverage_count(DenseVector{}), 0u);
    EXPECT_EQ(coverage_count(DenseVector{0.2, 0.0, 0.5, 0.0, 0.3}, 1.0), 3u);
    EXPECT_THROW(coverage_count(DenseVector{1.0}, 0.0), Error);
    EXPECT_THROW(coverage_count(DenseVector{1.0}, 1.5), Error);
}

TEST(Coverage, MatchesPrefixScanOracle) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        DenseVector w(1 + rng() % 40);
        for (double& e : w) e = u(rng) < 0.3 ? 0.0 : std::pow(u(rng), 3.0);
        const double fraction = 0.5 + 0.49 * u(rng);
        DenseVector sorted = w;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
        std::size_t want = 0;
        if (total > 0.0) {
            double run = 0.0;
            while (run < fraction * total) run += sorted[want++];
        }
        ASSERT_EQ(coverage_count(w, fraction), want);
    }
}

TEST(Reuse, RowsSumToOne) {
    const TaskStream s = make_stream(small_stream());
    const ToyModel model = grown(s, Method::SelfAdaptive, 3, 7);
    const auto m = reuse_matrix(model, batches_of(s));
    ASSERT_EQ(m.size(), 3u);
    for (const DenseVector& row : m) {
        ASSERT_EQ(row.size(), 3u);
        EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
        for (double v : row) EXPECT_GE(v, 0.0);
    }
}

TEST(Reuse, SingleTaskIsIdentity) {
    const TaskStream s = make_stream(small_stream(1));
    const ToyModel model = grown(s, Method::SelfAdaptive, 2, 8);
    const auto m = reuse_matrix(model, batches_of(s));
    ASSERT_EQ(m.size(), 1u);
    EXPECT_NEAR(m[0][0], 1.0, 1e-15);
}

TEST(Reuse, UnshiftedTasksShareRanks) {
    const TaskStream s = make_stream(small_stream(3, 0.0));
    const ToyModel model = grown(s, Method::SelfAdaptive, 6, 9);
    const auto m = reuse_matrix(model, batches_of(s));
    for (std::size_t t = 0; t < 3; ++t) {
        double off = 0.0;
        for (std::size_t u = 0; u < 3; ++u)
            if (u != t) off += m[t][u];
        EXPECT_GT(off, 0.0);
    }
}

TEST(Entropy, SingletonAndUniform) {
    EXPECT_EQ(gate_entropy(DenseVector{0.0, 0.7, 0.0}), 0.0);
    EXPECT_EQ(gate_entropy(DenseVector(4, 0.0)), 0.0);
    for (std::size_t k : {2u, 5u, 16u}) EXPECT_NEAR(gate_entropy(DenseVector(k, 1.0 / k)), std::log(k), 1e-12);
}

TEST(Entropy, MatchesOracle) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const DenseVector w = testing::gaussian_vector(9, rng);
        DenseVector p(9);
        double total = 0.0;
        for (double v : w) total += std::abs(v);
        for (std::size_t i = 0; i < 9; ++i) p[i] = std::abs(w[i]) / total;
        ASSERT_NEAR(gate_entropy(w), testing::shannon_entropy(p), 1e-12);
    }
}

TEST(ParamReport, RowsPerAdaptedLayer) {
    const TaskStream s = make_stream(small_stream());
    const ToyModel model = grown(s, Method::SelfAdaptive, 2, 11);
    const auto rows = param_report(model);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].d_in, 8u);
    EXPECT_EQ(rows[1].d_out, 6u);
    EXPECT_EQ(rows[0].lora, 4u * 16);
    EXPECT_EQ(rows[0].moe_lora, 4u * 16 + 8);
    EXPECT_EQ(rows[0].counts.activated, 4u * 8 + 2u * 8);
}

}  // namespace
}  // namespace mora
