// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mora/trainer.hpp"

namespace mora {

struct AnalysisConfig {
    double coverage_fraction = 0.99;
    /// 1-based tasks whose test splits form the analysis dataset; empty = all.
    std::vector<std::size_t> tasks;

    bool operator==(const AnalysisConfig&) const = default;
};

/// Everything a run depends on. Serialized as nested JSON; see README for
/// the key layout.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";
    StreamConfig stream;
    ArchConfig arch;
    OptimConfig optim;
    PretrainConfig pretrain;
    AverageDefinition average = AverageDefinition::TransferLast;
    AnalysisConfig analysis;

    bool operator==(const RunConfig&) const = default;
};

/// Checks ranges and cross-field constraints. Throws ErrorCode::InvalidConfig.
void validate(const RunConfig& cfg);

/// Strict parse: unknown keys and wrong value types are rejected with
/// ErrorCode::InvalidConfig. Missing keys keep their defaults.
RunConfig parse_run_config(const std::string& json_text);

/// Reads and parses a config file; a missing or unreadable file raises
/// ErrorCode::InvalidConfig naming the path.
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON text (fixed key order, round-trip precision).
std::string dump_run_config(const RunConfig& cfg, int indent = 2);

/// Named presets: "default" (desk benchmark), "clip" (tau 0.1,
/// delta 0.2, r 16, k 16), "llm" (r 8, k 4, tau 0.5).
RunConfig preset_config(const std::string& name);

}  // namespace mora
