// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mora {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to '" + path.string() + "'");
}

std::string sha_of(std::string_view bytes) {
    return sha256_hex({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
}

/// Collects tensors as they are written so the manifest can reference them.
class BlobWriter {
public:
    explicit BlobWriter(fs::path dir) : dir_(std::move(dir)) {}

    json put(const std::string& name, std::size_t rows, std::size_t cols, std::span<const double> values) {
        const std::string bytes = encode_doubles(values);
        const std::string file = "tensors/" + name + ".bin";
        write_file(dir_ / file, bytes);
        return {{"file", file}, {"rows", rows}, {"cols", cols}, {"sha256", sha_of(bytes)}};
    }

private:
    fs::path dir_;
};

DenseMatrix read_blob(const fs::path& dir, const json& entry) {
    const std::string file = entry.at("file").get<std::string>();
    const std::size_t rows = entry.at("rows").get<std::size_t>();
    const std::size_t cols = entry.at("cols").get<std::size_t>();
    const std::string bytes = read_file(dir / file);
    if (sha_of(bytes) != entry.at("sha256").get<std::string>())
        throw Error(ErrorCode::HashMismatch, "content hash mismatch for '" + (dir / file).string() + "'");
    if (bytes.size() != rows * cols * sizeof(double))
        throw Error(ErrorCode::HashMismatch, "size mismatch for '" + (dir / file).string() + "'");
    if (rows == 0 || cols == 0) return {};
    return DenseMatrix(rows, cols, decode_doubles(bytes));
}

json gate_json(const GateConfig& g) {
    return {{"mode", std::string(to_string(g.mode))},
            {"tau", g.tau},
            {"budget_k", g.budget_k},
            {"delta", g.delta},
            {"eps", g.eps},
            {"raw_softmax", g.raw_softmax}};
}

GateConfig gate_from_json(const json& j) {
    GateConfig g;
    const auto mode = parse_gate_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::InvalidConfig, "manifest names an unknown gate mode");
    g.mode = *mode;
    g.tau = j.at("tau").get<double>();
    g.budget_k = j.at("budget_k").get<std::size_t>();
    g.delta = j.at("delta").get<double>();
    g.eps = j.at("eps").get<double>();
    g.raw_softmax = j.at("raw_softmax").get<bool>();
    return g;
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "SHA-256 computation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

std::string encode_doubles(std::span<const double> values) {
    std::string out(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return out;
}

DenseVector decode_doubles(std::string_view bytes) {
    if (bytes.size() % 8 != 0) throw Error(ErrorCode::Io, "tensor blob length is not a multiple of 8");
    DenseVector out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::string save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    std::error_code ec;
    fs::remove_all(dir / "tensors", ec);
    fs::create_directories(dir / "tensors", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create checkpoint directory '" + dir.string() + "': " + ec.message());

    BlobWriter blobs(dir);
    const ToyModel& model = ckpt.model;
    json layers = json::array();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const ModelLayer& layer = model.layers[l];
        const AdaptedLinear& a = layer.adapted;
        const std::string prefix = "layer" + std::to_string(l);
        json lj;
        lj["index"] = l;
        lj["d_in"] = a.d_in();
        lj["d_out"] = a.d_out();
        lj["r_per_task"] = a.pool.r_per_task;
        lj["adapted"] = model.is_adapted(l);
        lj["gate"] = gate_json(a.cfg);
        json task_ids = json::array();
        json frozen = json::array();
        DenseVector keys;
        DenseVector values;
        for (const auto& u : a.pool.units) {
            task_ids.push_back(u.task_id);
            frozen.push_back(u.frozen);
            keys.insert(keys.end(), u.key_a.begin(), u.key_a.end());
            values.insert(values.end(), u.value_b.begin(), u.value_b.end());
        }
        lj["units"] = {{"count", a.pool.size()}, {"task_id", task_ids}, {"frozen", frozen}};
        json tensors;
        tensors["w0"] = blobs.put(prefix + "_w0", a.d_out(), a.d_in(), a.w0.data());
        tensors["keys"] = blobs.put(prefix + "_keys", a.pool.size(), a.d_in(), keys);
        tensors["values"] = blobs.put(prefix + "_values", a.pool.size(), a.d_out(), values);
        tensors["router"] = blobs.put(prefix + "_router", layer.router.w_r.rows(), layer.router.w_r.cols(),
                                      layer.router.w_r.data());
        lj["router_d_in"] = layer.router.d_in;
        lj["tensors"] = tensors;
        layers.push_back(lj);
    }

    DenseVector acc_flat;
    for (const auto& row : ckpt.acc.rows) {
        if (row.size() != ckpt.acc.num_tasks)
            throw Error(ErrorCode::DimensionMismatch, "accuracy row length differs from num_tasks");
        acc_flat.insert(acc_flat.end(), row.begin(), row.end());
    }

    json manifest;
    manifest["format_version"] = kCheckpointFormatVersion;
    // The output location is not part of the model: two runs that differ only
    // in where they write must produce identical manifests.
    RunConfig snapshot = ckpt.config;
    snapshot.out_dir = ".";
    manifest["config"] = json::parse(dump_run_config(snapshot));
    manifest["completed_tasks"] = ckpt.completed_tasks;
    manifest["method"] = {{"gate", std::string(to_string(model.method.gate))},
                          {"grow_each_task", model.method.grow_each_task}};
    manifest["adapt_head"] = model.adapt_head;
    manifest["layers"] = layers;
    manifest["accuracy"] = {{"num_tasks", ckpt.acc.num_tasks},
                            {"tensor", blobs.put("accuracy", ckpt.acc.rows.size(), ckpt.acc.num_tasks, acc_flat)}};

    const std::string text = manifest.dump(2) + "\n";
    write_file(dir / "manifest.json", text);
    return sha_of(text);
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const std::string text = read_file(dir / "manifest.json");
    json manifest;
    try {
        manifest = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, "manifest '" + (dir / "manifest.json").string() + "' is not JSON");
    }
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw Error(ErrorCode::InvalidConfig,
                        "unsupported checkpoint format_version " + std::to_string(version));
        }
        Checkpoint ckpt;
        ckpt.config = parse_run_config(manifest.at("config").dump());
        ckpt.completed_tasks = manifest.at("completed_tasks").get<std::size_t>();

        ToyModel& model = ckpt.model;
        const auto gate_mode = parse_gate_mode(manifest.at("method").at("gate").get<std::string>());
        if (!gate_mode) throw Error(ErrorCode::InvalidConfig, "manifest names an unknown method gate");
        model.method.gate = *gate_mode;
        model.method.grow_each_task = manifest.at("method").at("grow_each_task").get<bool>();
        model.adapt_head = manifest.at("adapt_head").get<bool>();

        for (const auto& lj : manifest.at("layers")) {
            const json& tensors = lj.at("tensors");
            DenseMatrix w0 = read_blob(dir, tensors.at("w0"));
            ModelLayer layer;
            layer.adapted = AdaptedLinear(std::move(w0), gate_from_json(lj.at("gate")),
                                          lj.at("r_per_task").get<std::size_t>());
            const DenseMatrix keys = read_blob(dir, tensors.at("keys"));
            const DenseMatrix values = read_blob(dir, tensors.at("values"));
            const json& units = lj.at("units");
            const std::size_t count = units.at("count").get<std::size_t>();
            if (keys.rows() != count || values.rows() != count)
                throw Error(ErrorCode::InvalidConfig, "manifest unit count disagrees with the key/value tensors");
            for (std::size_t i = 0; i < count; ++i) {
                RankUnit u;
                u.key_a.assign(keys.row(i).begin(), keys.row(i).end());
                u.value_b.assign(values.row(i).begin(), values.row(i).end());
                u.task_id = units.at("task_id").at(i).get<std::size_t>();
                u.frozen = units.at("frozen").at(i).get<bool>();
                layer.adapted.pool.units.push_back(std::move(u));
            }
            layer.router.d_in = lj.at("router_d_in").get<std::size_t>();
            layer.router.w_r = read_blob(dir, tensors.at("router"));
            model.layers.push_back(std::move(layer));
        }

        ckpt.acc.num_tasks = manifest.at("accuracy").at("num_tasks").get<std::size_t>();
        const DenseMatrix acc = read_blob(dir, manifest.at("accuracy").at("tensor"));
        for (std::size_t i = 0; i < acc.rows(); ++i) ckpt.acc.rows.emplace_back(acc.row(i).begin(), acc.row(i).end());
        return ckpt;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "malformed manifest in '" + dir.string() + "': " + e.what());
    }
}

std::string checkpoint_digest(const fs::path& dir) { return sha_of(read_file(dir / "manifest.json")); }

}  // namespace mora
