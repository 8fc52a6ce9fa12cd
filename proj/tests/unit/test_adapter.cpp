// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "mora/adapter.hpp"
#include "support/gradcheck.hpp"

namespace mora {
namespace {

GateConfig adaptive(std::size_t k = 3, double tau = 0.1, double delta = 0.2) {
    GateConfig c;
    c.mode = GateMode::SelfAdaptive;
    c.budget_k = k;
    c.tau = tau;
    c.delta = delta;
    return c;
}

GateConfig dense() {
    GateConfig c;
    c.mode = GateMode::Dense;
    return c;
}

TEST(AdapterForward, EmptyPoolIsBasePath) {
    const AdaptedLinear layer(DenseMatrix{{1, 2}, {3, 4}}, adaptive(), 4);
    const AdapterOutput out = adapter_forward(layer, DenseVector{1, 1});
    EXPECT_EQ(out.y, (DenseVector{3, 7}));
    EXPECT_TRUE(out.trace.final_w.empty());
}

TEST(AdapterForward, ZeroValuesLeaveOutputButScoreInputs) {
    AdaptedLinear layer(DenseMatrix::identity(3), adaptive(), 4);
    grow(layer.pool, 4, 1, 3, 3, 99);
    const AdapterOutput out = adapter_forward(layer, DenseVector{0.5, -1, 2});
    EXPECT_EQ(out.y, (DenseVector{0.5, -1, 2}));
    double mag = 0.0;
    for (double s : out.trace.raw_scores_s) mag += std::abs(s);
    EXPECT_GT(mag, 0.0);
}

TEST(AdapterForward, HandComposedSingleRank) {
    GateConfig cfg = adaptive(16, 0.1, 0.2);
    cfg.eps = 1e-300;
    AdaptedLinear layer(DenseMatrix::identity(2), cfg, 1);
    layer.pool.units.push_back({{1, 0}, {0, 2}, 1, false});
    const AdapterOutput out = adapter_forward(layer, DenseVector{3, 4});
    EXPECT_NEAR(out.trace.raw_scores_s[0], 1.0, 1e-15);
    EXPECT_EQ(out.trace.final_w, (DenseVector{1.0}));
    EXPECT_NEAR(out.y[0], 3.0, 1e-14);
    EXPECT_NEAR(out.y[1], 10.0, 1e-14);
}

TEST(AdapterForward, DimensionMismatchThrows) {
    const AdaptedLinear layer(DenseMatrix(2, 3), adaptive(), 1);
    EXPECT_THROW(adapter_forward(layer, DenseVector{1, 2}), Error);
}

TEST(AdapterForward, DenseEqualsLoraMatrixProduct) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const AdaptedLinear layer = testing::random_adapted_layer(7, 5, 6, 0, dense(), rng);
        const DenseVector x = testing::gaussian_vector(7, rng);
        const DenseVector y = adapter_forward(layer, x).y;
        // W0 x + B (A x) with A = stacked keys (r x d_in), B = values (d_out x r).
        const DenseVector ax = matvec(layer.key_matrix(), x);
        DenseVector expected = matvec(layer.w0, x);
        const DenseVector bax = matvec(layer.value_matrix(), ax);
        for (std::size_t o = 0; o < 5; ++o) ASSERT_NEAR(y[o], expected[o] + bax[o], 1e-10);
    }
}

TEST(AdapterBackward, FullyPrunedIsInert) {
    AdaptedLinear layer(DenseMatrix{{1, 2}, {3, 4}}, adaptive(2, 0.1, 0.9), 2);
    layer.pool.units.push_back({{1, 0}, {1, 1}, 1, false});
    layer.pool.units.push_back({{0, 1}, {1, -1}, 1, false});
    const DenseVector x{1, 1};  // s = [0.707, 0.707] < 0.9: everything pruned
    const AdapterOutput out = adapter_forward(layer, x);
    ASSERT_EQ(out.trace.final_w, (DenseVector{0, 0}));
    const DenseVector dy{0.3, -0.7};
    const AdapterGrads g = adapter_backward(layer, x, out.trace, dy);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(g.d_value_b[i], (DenseVector{0, 0}));
        EXPECT_EQ(g.d_key_a[i], (DenseVector{0, 0}));
    }
    EXPECT_EQ(g.d_x, matvec_transposed(layer.w0, dy));
}

TEST(AdapterBackward, DenseSingleRankIsPlainLoraGradient) {
    AdaptedLinear layer(DenseMatrix::identity(3), dense(), 1);
    layer.pool.units.push_back({{0.5, -1, 2}, {1, 0, -2}, 1, false});
    const DenseVector x{1, 2, 3};
    const DenseVector dy{0.1, 0.2, 0.3};
    const AdapterOutput out = adapter_forward(layer, x);
    const AdapterGrads g = adapter_backward(layer, x, out.trace, dy);
    const double a = dot(layer.pool.units[0].key_a, x);
    const double gb = dot(layer.pool.units[0].value_b, dy);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(g.d_value_b[0][o], a * dy[o], 1e-15);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g.d_key_a[0][j], gb * x[j], 1e-15);
}

TEST(AdapterBackward, FrozenUnitsGetNoParameterGradients) {
    std::mt19937_64 rng(4);
    const AdaptedLinear layer = testing::random_adapted_layer(8, 8, 6, 3, adaptive(), rng);
    const DenseVector x = testing::gaussian_vector(8, rng);
    const AdapterOutput out = adapter_forward(layer, x);
    const AdapterGrads g = adapter_backward(layer, x, out.trace, testing::gaussian_vector(8, rng));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(g.d_key_a[i].empty());
        EXPECT_TRUE(g.d_value_b[i].empty());
    }
    for (std::size_t i = 3; i < 6; ++i) EXPECT_EQ(g.d_key_a[i].size(), 8u);
}

TEST(AdapterBackward, TraceMismatchRejected) {
    std::mt19937_64 rng(5);
    const AdaptedLinear layer = testing::random_adapted_layer(4, 4, 3, 0, adaptive(2), rng);
    GateTrace bogus = gate_from_activations(DenseVector{1, 2}, adaptive(2));
    try {
        adapter_backward(layer, DenseVector{1, 2, 3, 4}, bogus, DenseVector{1, 1, 1, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TraceMismatch);
    }
}

TEST(AdapterBackward, MatchesFiniteDifferencesAcrossModes) {
    std::mt19937_64 rng(808);
    GateConfig raw;
    raw.mode = GateMode::SelfRaw;
    GateConfig sparse = adaptive(3, 0.1, 0.0);
    sparse.mode = GateMode::SelfSparse;
    const GateConfig cfgs[] = {adaptive(3), sparse, raw, dense()};
    for (const GateConfig& cfg : cfgs) {
        int checked = 0;
        while (checked < 25) {
            const AdaptedLinear layer = testing::random_adapted_layer(8, 8, 6, 2, cfg, rng);
            const DenseVector x = testing::gaussian_vector(8, rng);
            const DenseVector c = testing::gaussian_vector(8, rng);
            const testing::GradCheck r = testing::check_adapter_gradients(layer, x, c, 1e-6);
            if (r.screened_out) continue;
            ++checked;
            ASSERT_LE(r.rel_error, 1e-5) << "mode " << to_string(cfg.mode);
        }
    }
}

TEST(Grow, FreezeAndAppend) {
    RankPool pool;
    grow(pool, 16, 1, 8, 4, 1);
    EXPECT_EQ(pool.size(), 16u);
    for (const auto& u : pool.units) {
        EXPECT_FALSE(u.frozen);
        EXPECT_EQ(u.task_id, 1u);
        EXPECT_EQ(u.value_b, DenseVector(4, 0.0));
    }
    grow(pool, 16, 2, 8, 4, 1);
    EXPECT_EQ(pool.size(), 32u);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(pool.units[i].frozen, i < 16);
    RankPool llm;
    grow(llm, 8, 1, 8, 4, 1);
    EXPECT_EQ(llm.size(), 8u);
}

TEST(Grow, NonMonotonicTaskRejected) {
    RankPool pool;
    grow(pool, 2, 3, 4, 4, 1);
    try {
        grow(pool, 2, 3, 4, 4, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonMonotonicTask);
    }
}

TEST(Grow, KeyVarianceIsOneOverFanIn) {
    RankPool pool;
    grow(pool, 4000, 1, 64, 1, 2024);
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& u : pool.units)
        for (double e : u.key_a) {
            sq += e * e;
            ++n;
        }
    EXPECT_NEAR(sq / static_cast<double>(n), 1.0 / 64.0, 0.02 / 64.0);
}

TEST(Grow, DeterministicInSeed) {
    RankPool a, b;
    grow(a, 5, 1, 6, 3, 42);
    grow(b, 5, 1, 6, 3, 42);
    EXPECT_EQ(a, b);
}

TEST(InertNewRanks, OutputUnchangedBitwise) {
    std::mt19937_64 rng(17);
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        AdaptedLinear layer = testing::random_adapted_layer(6, 4, 4, 0, adaptive(4, 0.1, 0.0), rng);
        DenseVector x = testing::gaussian_vector(6, rng);
        x[4] = 0.0;
        x[5] = 0.0;
        const DenseVector before = adapter_forward(layer, x).y;
        // New task ranks whose keys live on the coordinates where x is zero:
        // a = 0 exactly, so the norm n and the old scores are untouched. With
        // k = old count the new ranks only enter the top-k by beating a
        // negative old score, which the check below screens out.
        for (std::size_t u = 0; u < 4; ++u) layer.pool.units[u].frozen = true;
        for (int extra = 0; extra < 3; ++extra) {
            DenseVector key(6, 0.0);
            key[4] = testing::gaussian_vector(1, rng)[0];
            key[5] = testing::gaussian_vector(1, rng)[0];
            layer.pool.units.push_back({key, testing::gaussian_vector(4, rng), 2, false});
        }
        const AdapterOutput after = adapter_forward(layer, x);
        bool inert = true;
        for (std::size_t u = 4; u < 7; ++u) inert &= after.trace.final_w[u] == 0.0;
        if (!inert) continue;
        ++checked;
        ASSERT_EQ(std::memcmp(before.data(), after.y.data(), before.size() * sizeof(double)), 0);
    }
    EXPECT_GT(checked, 10);
}

TEST(ParamCounts, Formula) {
    GateConfig cfg = adaptive(16);
    AdaptedLinear a(DenseMatrix(32, 32), cfg, 16);
    EXPECT_EQ(param_counts(a).activated, 16u * 32 + 16u * 32);
    EXPECT_EQ(param_counts(a).added, 16u * 64);
    cfg.budget_k = 4;
    // The count is linear in d when d_in = d_out = d; 4096 = 8 * 512 keeps the
    // base matrix small.
    AdaptedLinear wide(DenseMatrix(512, 512), cfg, 16);
    EXPECT_EQ(8 * param_counts(wide).activated, 81920u);
    cfg.mode = GateMode::Dense;
    AdaptedLinear plain(DenseMatrix(10, 20), cfg, 8);
    EXPECT_EQ(param_counts(plain).activated, 8u * (20 + 10));
}

}  // namespace
}  // namespace mora
