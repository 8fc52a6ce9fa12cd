// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mora {

/// Shortest round-trip decimal form, independent of the C/C++ locale.
/// NaN prints as "nan".
std::string format_number(double v);
std::string format_number(std::size_t v);

/// Minimal CSV writer: comma separated, '\n' line ends, no quoting (callers
/// only emit identifiers and numbers).
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    void row(const std::vector<std::string>& fields);

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_ = 0;
};

}  // namespace mora
