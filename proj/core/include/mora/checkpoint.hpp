// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "mora/config.hpp"

namespace mora {

inline constexpr int kCheckpointFormatVersion = 1;

/// A saved model plus the run state needed to resume.
///
/// On disk: <dir>/manifest.json and <dir>/tensors/*.bin. Each blob holds
/// little-endian IEEE-754 doubles, row-major, no header or padding; the
/// manifest records its shape and SHA-256.
struct Checkpoint {
    RunConfig config;
    ToyModel model;
    /// Tasks finished so far (0 for a pretrained base).
    std::size_t completed_tasks = 0;
    AccuracyMatrix acc;
};

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::span<const unsigned char> bytes);

/// Little-endian encoding of a double array, and its inverse.
std::string encode_doubles(std::span<const double> values);
DenseVector decode_doubles(std::string_view bytes);

/// Writes (and overwrites) a checkpoint directory. Returns the checkpoint
/// digest: SHA-256 over the manifest text, which itself lists every blob hash.
/// Throws ErrorCode::Io when the directory cannot be written.
std::string save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// Reads a checkpoint and verifies every blob against the manifest.
/// Throws ErrorCode::HashMismatch on a corrupted blob, ErrorCode::Io on a
/// missing file and ErrorCode::InvalidConfig on an unsupported manifest.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Digest of an existing checkpoint directory (hash of its manifest).
std::string checkpoint_digest(const std::filesystem::path& dir);

}  // namespace mora
