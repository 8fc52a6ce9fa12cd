// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace mora {

namespace {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read through the size_t path");

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

/// Walks one JSON object, remembering which keys were read so leftovers can
/// be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) fail(path_ + " must be an object");
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.contains(key)) fail("unknown key '" + where(key) + "'");
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key);
    }

    void read(const std::string& key, std::size_t& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
            fail(where(key) + " must be a non-negative integer");
        out = v.get<std::size_t>();
    }

    void read(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        if (!v.is_number()) fail(where(key) + " must be a number");
        out = v.get<double>();
    }

    void read(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        if (!v.is_boolean()) fail(where(key) + " must be true or false");
        out = v.get<bool>();
    }

    void read(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        if (!v.is_string()) fail(where(key) + " must be a string");
        out = v.get<std::string>();
    }

    void read(const std::string& key, std::vector<std::size_t>& out) {
        if (!has(key)) return;
        const json& v = obj_.at(key);
        if (!v.is_array()) fail(where(key) + " must be an array of non-negative integers");
        out.clear();
        for (const auto& e : v) {
            if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0))
                fail(where(key) + " must be an array of non-negative integers");
            out.push_back(e.get<std::size_t>());
        }
    }

    const json* child(const std::string& key) {
        if (!has(key)) return nullptr;
        return &obj_.at(key);
    }

    std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_stream(const json& j, StreamConfig& s) {
    ObjectReader r(j, "stream");
    r.read("seed", s.seed);
    r.read("num_tasks", s.num_tasks);
    r.read("classes_per_task", s.classes_per_task);
    r.read("dim", s.dim);
    r.read("shared_dim", s.shared_dim);
    r.read("shift_strength", s.shift_strength);
    r.read("shared_ratio", s.shared_ratio);
    r.read("prototype_norm", s.prototype_norm);
    r.read("noise_sigma", s.noise_sigma);
    r.read("train_size", s.train_size);
    r.read("test_size", s.test_size);
    r.read("task_local_labels", s.task_local_labels);
    r.finish();
}

void read_gate(const json& j, GateConfig& g) {
    ObjectReader r(j, "gate");
    r.read("tau", g.tau);
    r.read("budget_k", g.budget_k);
    r.read("delta", g.delta);
    r.read("eps", g.eps);
    r.read("raw_softmax", g.raw_softmax);
    r.finish();
}

void read_model(const json& j, ArchConfig& a) {
    ObjectReader r(j, "model");
    r.read("hidden", a.hidden);
    r.read("r_per_task", a.r_per_task);
    std::string method(to_string(a.method));
    r.read("method", method);
    const auto parsed = parse_method(method);
    if (!parsed) fail("model.method: unknown method '" + method + "'");
    a.method = *parsed;
    a.gate.mode = method_config(a.method).gate;
    r.read("adapt_head", a.adapt_head);
    r.finish();
}

void read_optim(const json& j, OptimConfig& o) {
    ObjectReader r(j, "optim");
    r.read("lr", o.lr);
    r.read("beta1", o.beta1);
    r.read("beta2", o.beta2);
    r.read("eps", o.eps);
    r.read("weight_decay", o.weight_decay);
    r.read("iters_per_task", o.iters_per_task);
    r.read("batch_size", o.batch_size);
    r.finish();
}

void read_pretrain(const json& j, PretrainConfig& p) {
    ObjectReader r(j, "pretrain");
    r.read("steps", p.steps);
    r.read("batch_size", p.batch_size);
    r.read("lr", p.lr);
    r.read("test_size", p.test_size);
    r.finish();
}

void read_metrics(const json& j, AverageDefinition& avg) {
    ObjectReader r(j, "metrics");
    std::string name = avg == AverageDefinition::Steps ? "steps" : "transfer_last";
    r.read("average", name);
    if (name == "transfer_last")
        avg = AverageDefinition::TransferLast;
    else if (name == "steps")
        avg = AverageDefinition::Steps;
    else
        fail("metrics.average must be 'transfer_last' or 'steps'");
    r.finish();
}

void read_analysis(const json& j, AnalysisConfig& a) {
    ObjectReader r(j, "analysis");
    r.read("coverage_fraction", a.coverage_fraction);
    r.read("tasks", a.tasks);
    r.finish();
}

json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    const StreamConfig& s = c.stream;
    j["stream"] = {{"seed", s.seed},
                   {"num_tasks", s.num_tasks},
                   {"classes_per_task", s.classes_per_task},
                   {"dim", s.dim},
                   {"shared_dim", s.shared_dim},
                   {"shift_strength", s.shift_strength},
                   {"shared_ratio", s.shared_ratio},
                   {"prototype_norm", s.prototype_norm},
                   {"noise_sigma", s.noise_sigma},
                   {"train_size", s.train_size},
                   {"test_size", s.test_size},
                   {"task_local_labels", s.task_local_labels}};
    j["model"] = {{"hidden", c.arch.hidden},
                  {"r_per_task", c.arch.r_per_task},
                  {"method", std::string(to_string(c.arch.method))},
                  {"adapt_head", c.arch.adapt_head}};
    const GateConfig& g = c.arch.gate;
    j["gate"] = {{"tau", g.tau},
                 {"budget_k", g.budget_k},
                 {"delta", g.delta},
                 {"eps", g.eps},
                 {"raw_softmax", g.raw_softmax}};
    const OptimConfig& o = c.optim;
    j["optim"] = {{"lr", o.lr},
                  {"beta1", o.beta1},
                  {"beta2", o.beta2},
                  {"eps", o.eps},
                  {"weight_decay", o.weight_decay},
                  {"iters_per_task", o.iters_per_task},
                  {"batch_size", o.batch_size}};
    const PretrainConfig& p = c.pretrain;
    j["pretrain"] = {{"steps", p.steps}, {"batch_size", p.batch_size}, {"lr", p.lr}, {"test_size", p.test_size}};
    j["metrics"] = {{"average", c.average == AverageDefinition::Steps ? "steps" : "transfer_last"}};
    j["analysis"] = {{"coverage_fraction", c.analysis.coverage_fraction}, {"tasks", c.analysis.tasks}};
    return j;
}

void require(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

}  // namespace

void validate(const RunConfig& c) {
    const StreamConfig& s = c.stream;
    require(s.num_tasks >= 1, "stream.num_tasks must be at least 1");
    require(s.classes_per_task >= 2, "stream.classes_per_task must be at least 2");
    require(s.dim >= 1 && s.shared_dim < s.dim, "stream.shared_dim must be smaller than stream.dim");
    require(s.shared_ratio >= 0.0 && s.shared_ratio <= 1.0, "stream.shared_ratio must lie in [0, 1]");
    require(s.shared_dim > 0 || s.shared_ratio == 0.0, "stream.shared_ratio > 0 needs stream.shared_dim > 0");
    require(std::isfinite(s.shift_strength) && s.shift_strength >= 0.0, "stream.shift_strength must be >= 0");
    require(std::isfinite(s.prototype_norm) && s.prototype_norm > 0.0, "stream.prototype_norm must be > 0");
    require(std::isfinite(s.noise_sigma) && s.noise_sigma >= 0.0, "stream.noise_sigma must be >= 0");
    require(s.train_size >= 1 && s.test_size >= 1, "stream.train_size and stream.test_size must be positive");

    for (std::size_t h : c.arch.hidden) require(h >= 1, "model.hidden entries must be positive");
    require(c.arch.r_per_task >= 1, "model.r_per_task must be at least 1");
    try {
        validate(c.arch.gate);
    } catch (const Error& e) {
        fail(std::string("gate: ") + e.what());
    }

    const OptimConfig& o = c.optim;
    require(o.lr > 0.0 && std::isfinite(o.lr), "optim.lr must be positive");
    require(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0, "optim betas must lie in [0, 1)");
    require(o.eps > 0.0, "optim.eps must be positive");
    require(o.weight_decay >= 0.0, "optim.weight_decay must be >= 0");
    require(o.batch_size >= 1, "optim.batch_size must be positive");

    require(c.pretrain.batch_size >= 1 && c.pretrain.test_size >= 1, "pretrain batch and test sizes must be positive");
    require(c.pretrain.lr > 0.0, "pretrain.lr must be positive");

    require(c.analysis.coverage_fraction > 0.0 && c.analysis.coverage_fraction <= 1.0,
            "analysis.coverage_fraction must lie in (0, 1]");
    for (std::size_t t : c.analysis.tasks)
        require(t >= 1 && t <= s.num_tasks, "analysis.tasks entries must name tasks of the stream");
    require(!c.out_dir.empty(), "out_dir must not be empty");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    ObjectReader root(j, "");
    root.read("seed", cfg.seed);
    root.read("out_dir", cfg.out_dir);
    // The method decides the gate mode, so the model block is read before the gate block.
    if (const json* m = root.child("model")) read_model(*m, cfg.arch);
    if (const json* g = root.child("gate")) read_gate(*g, cfg.arch.gate);
    if (const json* s = root.child("stream")) read_stream(*s, cfg.stream);
    if (const json* o = root.child("optim")) read_optim(*o, cfg.optim);
    if (const json* p = root.child("pretrain")) read_pretrain(*p, cfg.pretrain);
    if (const json* m = root.child("metrics")) read_metrics(*m, cfg.average);
    if (const json* a = root.child("analysis")) read_analysis(*a, cfg.analysis);
    root.finish();
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot read config file '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_run_config(text.str());
    } catch (const Error& e) {
        fail(path.string() + ": " + e.what());
    }
}

std::string dump_run_config(const RunConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    cfg.arch.gate.mode = method_config(cfg.arch.method).gate;
    if (name == "default" || name == "clip") return cfg;
    if (name == "llm") {
        cfg.arch.r_per_task = 8;
        cfg.arch.gate.budget_k = 4;
        cfg.arch.gate.tau = 0.5;
        return cfg;
    }
    fail("unknown preset '" + name + "' (expected default, clip or llm)");
}

}  // namespace mora
