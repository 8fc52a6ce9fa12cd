// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/csv.hpp"

#include <charconv>
#include <cmath>

#include "mora/error.hpp"

namespace mora {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_number(std::size_t v) { return std::to_string(v); }

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), width_(header.size()) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    if (fields.size() != width_)
        throw Error(ErrorCode::DimensionMismatch, "CSV row width differs from header in '" + path_.string() + "'");
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << fields[i];
    }
    out_ << '\n';
    if (!out_) throw Error(ErrorCode::Io, "write failed for '" + path_.string() + "'");
}

}  // namespace mora
