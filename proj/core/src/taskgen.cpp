// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/taskgen.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace mora {

namespace {

constexpr std::uint64_t kTestStream = 0x7e57;
constexpr std::uint64_t kPretrainTestStream = 0x9e7e57;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Orthonormal basis of R^d from Gram-Schmidt on a Gaussian matrix; columns of
/// the result are the basis vectors.
DenseMatrix random_orthonormal(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<DenseVector> basis;
    while (basis.size() < d) {
        DenseVector v(d);
        for (double& e : v) e = normal(rng);
        // Two passes keep the basis orthogonal to rounding level.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) axpy(-dot(b, v), b, v);
        const double n = norm2(v);
        if (n < 1e-8) continue;
        for (double& e : v) e /= n;
        basis.push_back(std::move(v));
    }
    DenseMatrix q(d, d);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < d; ++r) q(r, c) = basis[c][r];
    return q;
}

/// Solves A X = B in place by Gauss-Jordan elimination with partial pivoting.
DenseMatrix solve(DenseMatrix a, DenseMatrix b) {
    const std::size_t n = a.rows();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(col, c), a(pivot, c));
            for (std::size_t c = 0; c < b.cols(); ++c) std::swap(b(col, c), b(pivot, c));
        }
        const double inv = 1.0 / a(col, col);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) a(r, c) -= f * a(col, c);
            for (std::size_t c = 0; c < b.cols(); ++c) b(r, c) -= f * b(col, c);
        }
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < b.cols(); ++c) b(r, c) /= a(r, r);
    return b;
}

/// Cayley transform of a random skew-symmetric generator scaled by strength:
/// R = (I - K/2)^{-1} (I + K/2). strength == 0 gives exactly I.
DenseMatrix random_rotation(std::size_t d, double strength, std::mt19937_64& rng) {
    if (strength == 0.0) return DenseMatrix::identity(d);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix k(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = r + 1; c < d; ++c) {
            const double g = normal(rng) * strength / std::sqrt(static_cast<double>(d));
            k(r, c) = g;
            k(c, r) = -g;
        }
    }
    DenseMatrix lhs = DenseMatrix::identity(d);
    DenseMatrix rhs = DenseMatrix::identity(d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            lhs(r, c) -= 0.5 * k(r, c);
            rhs(r, c) += 0.5 * k(r, c);
        }
    }
    return solve(std::move(lhs), std::move(rhs));
}

DenseVector unit_gaussian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseVector v(n);
    double len = 0.0;
    while (len < 1e-8) {
        for (double& e : v) e = normal(rng);
        len = norm2(v);
    }
    for (double& e : v) e /= len;
    return v;
}

DenseVector noisy_input(const TaskSpec& task, std::size_t cls, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseVector z = task.class_prototypes[cls];
    if (task.noise_sigma > 0.0)
        for (double& e : z) e += task.noise_sigma * normal(rng);
    return matvec(task.rotation, z);
}

Batch draw(const TaskSpec& task, std::size_t n, std::mt19937_64& rng) {
    Batch batch;
    batch.inputs.reserve(n);
    batch.labels.reserve(n);
    if (task.task_local_labels) batch.window = {task.label_offset, task.num_classes()};
    std::uniform_int_distribution<std::size_t> pick(0, task.num_classes() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = pick(rng);
        batch.labels.push_back(task.label_offset + cls);
        batch.inputs.push_back(noisy_input(task, cls, rng));
    }
    return batch;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

TaskStream make_stream(const StreamConfig& cfg) {
    if (cfg.num_tasks == 0) throw Error(ErrorCode::InvalidDims, "stream needs at least one task");
    if (cfg.classes_per_task == 0) throw Error(ErrorCode::InvalidDims, "classes_per_task must be positive");
    if (cfg.dim == 0 || cfg.shared_dim >= cfg.dim) {
        throw Error(ErrorCode::InvalidDims, "shared_dim (" + std::to_string(cfg.shared_dim) +
                                                ") must be smaller than dim (" + std::to_string(cfg.dim) + ")");
    }
    if (!(cfg.shared_ratio >= 0.0 && cfg.shared_ratio <= 1.0)) {
        throw Error(ErrorCode::InvalidDims, "shared_ratio must lie in [0, 1]");
    }
    if (cfg.shared_dim == 0 && cfg.shared_ratio > 0.0) {
        throw Error(ErrorCode::InvalidDims, "shared_ratio > 0 needs a non-empty shared subspace");
    }

    TaskStream stream;
    stream.config = cfg;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed));
    const DenseMatrix basis = random_orthonormal(cfg.dim, rng);
    const std::size_t private_dim = cfg.dim - cfg.shared_dim;
    if (cfg.shared_dim > 0) {
        stream.shared_subspace = DenseMatrix(cfg.dim, cfg.shared_dim);
        for (std::size_t r = 0; r < cfg.dim; ++r)
            for (std::size_t c = 0; c < cfg.shared_dim; ++c) stream.shared_subspace(r, c) = basis(r, c);
    }

    const double shared_norm = cfg.shared_ratio * cfg.prototype_norm;
    const double private_norm = std::sqrt(1.0 - cfg.shared_ratio * cfg.shared_ratio) * cfg.prototype_norm;

    for (std::size_t t = 0; t < cfg.num_tasks; ++t) {
        TaskSpec task;
        task.task_id = t + 1;
        task.label_offset = t * cfg.classes_per_task;
        task.noise_sigma = cfg.noise_sigma;
        task.train_size = cfg.train_size;
        task.test_size = cfg.test_size;
        task.seed = derive_seed(cfg.seed, 0x7a5c, task.task_id);
        task.task_local_labels = cfg.task_local_labels;
        for (std::size_t c = 0; c < cfg.classes_per_task; ++c) {
            DenseVector proto(cfg.dim, 0.0);
            if (cfg.shared_dim > 0) {
                const DenseVector u = unit_gaussian(cfg.shared_dim, rng);
                for (std::size_t j = 0; j < cfg.shared_dim; ++j)
                    for (std::size_t r = 0; r < cfg.dim; ++r) proto[r] += shared_norm * u[j] * basis(r, j);
            }
            const DenseVector v = unit_gaussian(private_dim, rng);
            for (std::size_t j = 0; j < private_dim; ++j)
                for (std::size_t r = 0; r < cfg.dim; ++r)
                    proto[r] += private_norm * v[j] * basis(r, cfg.shared_dim + j);
            task.class_prototypes.push_back(std::move(proto));
        }
        task.rotation = random_rotation(cfg.dim, cfg.shift_strength, rng);
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

Batch sample_batch(const TaskSpec& task, std::size_t n, std::mt19937_64& rng) {
    if (n == 0) throw Error(ErrorCode::InvalidDims, "batch size must be at least 1");
    return draw(task, n, rng);
}

Batch test_split(const TaskSpec& task) {
    std::mt19937_64 rng(derive_seed(task.seed, kTestStream));
    return draw(task, task.test_size, rng);
}

Batch pretrain_batch(const TaskStream& stream, std::size_t n, std::mt19937_64& rng) {
    Batch batch;
    batch.inputs.reserve(n);
    batch.labels.reserve(n);
    std::uniform_int_distribution<std::size_t> pick_task(0, stream.tasks.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const TaskSpec& task = stream.tasks[pick_task(rng)];
        std::uniform_int_distribution<std::size_t> pick_class(0, task.num_classes() - 1);
        const std::size_t cls = pick_class(rng);
        DenseVector z = task.class_prototypes[cls];
        for (double& e : z) e += task.noise_sigma * normal(rng);
        batch.labels.push_back(task.label_offset + cls);
        batch.inputs.push_back(std::move(z));
    }
    return batch;
}

Batch pretrain_test_split(const TaskStream& stream, std::size_t n) {
    std::mt19937_64 rng(derive_seed(stream.config.seed, kPretrainTestStream));
    return pretrain_batch(stream, n, rng);
}

double nearest_prototype_accuracy(const TaskSpec& task, const Batch& batch) {
    if (batch.size() == 0) throw Error(ErrorCode::EmptyDataset, "nearest-prototype accuracy of an empty batch");
    std::vector<DenseVector> rotated;
    for (const auto& p : task.class_prototypes) rotated.push_back(matvec(task.rotation, p));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < rotated.size(); ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < rotated[c].size(); ++j) {
                const double diff = batch.inputs[i][j] - rotated[c][j];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (task.label_offset + best == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace mora
