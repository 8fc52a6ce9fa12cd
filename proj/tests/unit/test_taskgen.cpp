// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mora/taskgen.hpp"

namespace mora {
namespace {

DenseVector project_shared(const TaskStream& s, const DenseVector& v) {
    return matvec(s.shared_subspace, matvec_transposed(s.shared_subspace, v));
}

TEST(Stream, DeterministicInSeed) {
    const TaskStream a = make_stream(StreamConfig{});
    const TaskStream b = make_stream(StreamConfig{});
    for (std::size_t t = 0; t < a.tasks.size(); ++t) {
        EXPECT_EQ(a.tasks[t].class_prototypes, b.tasks[t].class_prototypes);
        EXPECT_EQ(a.tasks[t].rotation, b.tasks[t].rotation);
        const Batch x = test_split(a.tasks[t]);
        const Batch y = test_split(b.tasks[t]);
        EXPECT_EQ(x.inputs, y.inputs);
        EXPECT_EQ(x.labels, y.labels);
    }
    StreamConfig other;
    other.seed = 8;
    EXPECT_NE(make_stream(other).tasks[0].class_prototypes, a.tasks[0].class_prototypes);
}

TEST(Stream, LabelsAreDisjointBlocks) {
    const TaskStream s = make_stream(StreamConfig{});
    EXPECT_EQ(s.total_classes(), 20u);
    std::mt19937_64 rng(1);
    for (const TaskSpec& task : s.tasks) {
        EXPECT_EQ(task.label_offset, (task.task_id - 1) * 4);
        const Batch b = sample_batch(task, 200, rng);
        std::set<std::size_t> seen(b.labels.begin(), b.labels.end());
        EXPECT_EQ(seen.size(), 4u);
        EXPECT_EQ(*seen.begin(), task.label_offset);
        EXPECT_EQ(b.window.count, 0u);
    }
}

TEST(Stream, ZeroShiftIsIdentity) {
    StreamConfig cfg;
    cfg.shift_strength = 0.0;
    for (const TaskSpec& task : make_stream(cfg).tasks) EXPECT_EQ(task.rotation, DenseMatrix::identity(cfg.dim));
}

TEST(Stream, RotationsAreOrthogonal) {
    for (double strength : {0.5, 2.0, 5.0}) {
        StreamConfig cfg;
        cfg.shift_strength = strength;
        for (const TaskSpec& task : make_stream(cfg).tasks) {
            const DenseMatrix& r = task.rotation;
            for (std::size_t i = 0; i < cfg.dim; ++i) {
                for (std::size_t j = 0; j < cfg.dim; ++j) {
                    double g = 0.0;
                    for (std::size_t k = 0; k < cfg.dim; ++k) g += r(k, i) * r(k, j);
                    ASSERT_NEAR(g, i == j ? 1.0 : 0.0, 1e-8);
                }
            }
        }
    }
}

TEST(Stream, SharedSubspaceCarriesItsShareOfEveryPrototype) {
    const TaskStream s = make_stream(StreamConfig{});
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            double g = 0.0;
            for (std::size_t r = 0; r < 32; ++r) g += s.shared_subspace(r, i) * s.shared_subspace(r, j);
            ASSERT_NEAR(g, i == j ? 1.0 : 0.0, 1e-12);
        }
    }
    for (const TaskSpec& task : s.tasks) {
        for (const DenseVector& p : task.class_prototypes) {
            EXPECT_NEAR(norm2(p), 3.0, 1e-10);
            EXPECT_NEAR(norm2(project_shared(s, p)) / norm2(p), 0.5, 1e-10);
        }
    }
}

TEST(Stream, NoiselessSamplesAreRotatedPrototypes) {
    StreamConfig cfg;
    cfg.noise_sigma = 0.0;
    const TaskStream s = make_stream(cfg);
    std::mt19937_64 rng(2);
    for (const TaskSpec& task : s.tasks) {
        const Batch b = sample_batch(task, 20, rng);
        for (std::size_t i = 0; i < b.size(); ++i)
            EXPECT_EQ(b.inputs[i], matvec(task.rotation, task.class_prototypes[b.labels[i] - task.label_offset]));
    }
}

TEST(Stream, ClassMeansMatchRotatedPrototypes) {
    const TaskStream s = make_stream(StreamConfig{});
    std::mt19937_64 rng(3);
    const TaskSpec& task = s.tasks[2];
    const Batch b = sample_batch(task, 40000, rng);
    std::vector<DenseVector> mean(4, DenseVector(32, 0.0));
    std::vector<double> count(4, 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const std::size_t c = b.labels[i] - task.label_offset;
        axpy(1.0, b.inputs[i], mean[c]);
        count[c] += 1.0;
    }
    for (std::size_t c = 0; c < 4; ++c) {
        const DenseVector want = matvec(task.rotation, task.class_prototypes[c]);
        // Standard error per coordinate is 0.5 / sqrt(10000) = 0.005.
        for (std::size_t r = 0; r < 32; ++r) EXPECT_NEAR(mean[c][r] / count[c], want[r], 0.03);
    }
}

TEST(Stream, TasksAreSeparable) {
    const TaskStream s = make_stream(StreamConfig{});
    for (const TaskSpec& task : s.tasks) EXPECT_GE(nearest_prototype_accuracy(task, test_split(task)), 0.99);
}

TEST(Stream, TaskLocalLabelsSetWindow) {
    StreamConfig cfg;
    cfg.task_local_labels = true;
    const TaskStream s = make_stream(cfg);
    const Batch b = test_split(s.tasks[3]);
    EXPECT_EQ(b.window.begin, 12u);
    EXPECT_EQ(b.window.count, 4u);
}

TEST(Stream, PretrainBatchCoversEveryClassUnrotated) {
    const TaskStream s = make_stream(StreamConfig{});
    std::mt19937_64 rng(4);
    const Batch b = pretrain_batch(s, 2000, rng);
    std::set<std::size_t> seen(b.labels.begin(), b.labels.end());
    EXPECT_EQ(seen.size(), 20u);
    EXPECT_EQ(pretrain_test_split(s, 64).inputs, pretrain_test_split(s, 64).inputs);
}

TEST(Stream, InvalidDimensionsRejected) {
    auto expect_invalid = [](StreamConfig cfg) {
        try {
            make_stream(cfg);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::InvalidDims);
        }
    };
    StreamConfig c;
    c.shared_dim = 32;
    expect_invalid(c);
    c = StreamConfig{};
    c.num_tasks = 0;
    expect_invalid(c);
    c = StreamConfig{};
    c.classes_per_task = 0;
    expect_invalid(c);
    c = StreamConfig{};
    c.shared_ratio = 1.5;
    expect_invalid(c);
}

TEST(DeriveSeed, DistinctAcrossPurposes) {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t a = 0; a < 50; ++a)
        for (std::uint64_t b = 0; b < 50; ++b) seeds.insert(derive_seed(1, a, b));
    EXPECT_EQ(seeds.size(), 2500u);
    EXPECT_EQ(derive_seed(3, 4, 5), derive_seed(3, 4, 5));
}

}  // namespace
}  // namespace mora
