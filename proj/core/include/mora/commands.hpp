// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mora/analysis.hpp"
#include "mora/checkpoint.hpp"

namespace mora {

/// Environment variable that, when set, prefixes relative output directories.
inline constexpr const char* kOutRootEnv = "MORA_OUT_ROOT";

/// Output directory of a run: `override_dir` if given, else cfg.out_dir,
/// resolved under $MORA_OUT_ROOT when that is set and the path is relative.
std::filesystem::path resolve_out_dir(const RunConfig& cfg, const std::optional<std::string>& override_dir = {});

struct PretrainOutcome {
    std::filesystem::path checkpoint_dir;
    std::string digest;
    PretrainReport report;
};

/// Pretrains the frozen base; writes <out>/pretrain/ and <out>/pretrain_metrics.csv.
PretrainOutcome cmd_pretrain(const RunConfig& cfg, const std::filesystem::path& out);

struct TrainOptions {
    /// Pretrained base checkpoint; pretrained in-process when absent.
    std::optional<std::filesystem::path> base;
    /// Task checkpoint to continue from; its config replaces `cfg` except for
    /// the output directory.
    std::optional<std::filesystem::path> resume;
};

struct TrainOutcome {
    AccuracyMatrix acc;
    ContinualMetrics metrics;
    std::vector<std::filesystem::path> checkpoints;
};

/// Continual run; writes accuracy_matrix.csv, metrics.csv and
/// checkpoints/task_<t>/ under `out`.
TrainOutcome cmd_train(const RunConfig& cfg, const std::filesystem::path& out, const TrainOptions& opts = {});

struct SweepSpec {
    std::string axis;  // budget | tau | delta | mode
    std::vector<std::string> values;
};

/// Parses "axis=v1,v2,...". Throws ErrorCode::UnknownAxis for other axes and
/// ErrorCode::InvalidConfig for malformed specs or values.
SweepSpec parse_sweep(const std::string& text);

/// Applies one sweep value to a copy of cfg.
RunConfig apply_sweep_value(const RunConfig& cfg, const std::string& axis, const std::string& value);

struct SweepRow {
    std::string value;
    double transfer = 0.0;
    double average = 0.0;
    double last = 0.0;
};

/// One continual run per value from a shared base and shared seeds; writes
/// sweep.csv with columns axis,value,transfer,average,last.
std::vector<SweepRow> cmd_ablate(const RunConfig& cfg, const std::filesystem::path& out, const SweepSpec& sweep,
                                 const std::optional<std::filesystem::path>& base = {});

struct AnalyzeOutcome {
    ActivationProfile profile;
    std::vector<std::size_t> coverage;
    std::vector<DenseVector> reuse;
};

/// Activation analysis of a checkpoint over the test splits of `tasks`
/// (1-based; empty = the config's analysis.tasks, or every task). Writes
/// activation_profile.csv, coverage.csv, reuse_matrix.csv and param_report.csv.
AnalyzeOutcome cmd_analyze(const std::filesystem::path& checkpoint, const std::filesystem::path& out,
                           const std::vector<std::size_t>& tasks = {});

/// Short layer label used in reports: "hidden" or "head".
std::string layer_position(const ToyModel& model, std::size_t layer);

}  // namespace mora
