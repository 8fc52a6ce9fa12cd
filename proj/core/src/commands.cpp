// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "mora/commands.hpp"

#include <charconv>
#include <cstdlib>

#include "mora/csv.hpp"

namespace mora {

namespace fs = std::filesystem;

namespace {

void check_base_compatible(const RunConfig& cfg, const Checkpoint& base, const fs::path& dir) {
    if (base.completed_tasks != 0)
        throw Error(ErrorCode::InvalidConfig, "'" + dir.string() + "' is a task checkpoint, not a pretrained base");
    if (!(base.config.stream == cfg.stream))
        throw Error(ErrorCode::InvalidConfig, "base checkpoint was pretrained on a different stream");
    if (base.config.arch.hidden != cfg.arch.hidden || base.config.arch.adapt_head != cfg.arch.adapt_head)
        throw Error(ErrorCode::InvalidConfig, "base checkpoint has a different architecture");
}

ToyModel obtain_base(const RunConfig& cfg, const TaskStream& stream, const std::optional<fs::path>& base_dir) {
    if (!base_dir) return pretrain_base(cfg.arch, stream, cfg.pretrain, cfg.seed);
    Checkpoint base = load_checkpoint(*base_dir);
    check_base_compatible(cfg, base, *base_dir);
    configure_method(base.model, cfg.arch.method, cfg.arch.gate, cfg.arch.r_per_task);
    return std::move(base.model);
}

std::vector<std::string> task_header(const std::string& first, std::size_t num_tasks) {
    std::vector<std::string> header{first};
    for (std::size_t t = 1; t <= num_tasks; ++t) header.push_back("task_" + std::to_string(t));
    return header;
}

void write_accuracy_csv(const fs::path& path, const AccuracyMatrix& acc) {
    CsvWriter csv(path, task_header("after_task", acc.num_tasks));
    for (std::size_t i = 0; i < acc.rows.size(); ++i) {
        std::vector<std::string> fields{format_number(i + 1)};
        for (double v : acc.rows[i]) fields.push_back(format_number(v));
        csv.row(fields);
    }
}

void write_metrics_csv(const fs::path& path, const ContinualMetrics& m) {
    CsvWriter csv(path, {"task", "transfer", "average", "last"});
    for (std::size_t j = 0; j < m.last.size(); ++j) {
        csv.row({format_number(j + 1), format_number(m.transfer[j]), format_number(m.average[j]),
                 format_number(m.last[j])});
    }
    csv.row({"mean", format_number(m.mean_transfer), format_number(m.mean_average), format_number(m.mean_last)});
}

double parse_double(const std::string& text, const std::string& axis) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw Error(ErrorCode::InvalidConfig, "sweep value '" + text + "' for axis " + axis + " is not a number");
    return v;
}

std::size_t parse_count(const std::string& text, const std::string& axis) {
    std::size_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw Error(ErrorCode::InvalidConfig, "sweep value '" + text + "' for axis " + axis + " is not a count");
    return v;
}

std::vector<Batch> task_tests(const TaskStream& stream) {
    std::vector<Batch> tests;
    for (const auto& task : stream.tasks) tests.push_back(test_split(task));
    return tests;
}

}  // namespace

fs::path resolve_out_dir(const RunConfig& cfg, const std::optional<std::string>& override_dir) {
    fs::path out = override_dir ? fs::path(*override_dir) : fs::path(cfg.out_dir);
    if (const char* root = std::getenv(kOutRootEnv); root && *root && out.is_relative()) out = fs::path(root) / out;
    return out;
}

std::string layer_position(const ToyModel& model, std::size_t layer) {
    if (layer + 1 == model.layers.size()) return "head";
    return "hidden_" + std::to_string(layer + 1);
}

PretrainOutcome cmd_pretrain(const RunConfig& cfg, const fs::path& out) {
    validate(cfg);
    const TaskStream stream = make_stream(cfg.stream);
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.model = pretrain_base(cfg.arch, stream, cfg.pretrain, cfg.seed);
    ckpt.acc.num_tasks = cfg.stream.num_tasks;

    PretrainOutcome outcome;
    outcome.report = pretrain_report(ckpt.model, stream, cfg.pretrain, cfg.seed);
    outcome.checkpoint_dir = out / "pretrain";
    outcome.digest = save_checkpoint(outcome.checkpoint_dir, ckpt);

    CsvWriter csv(out / "pretrain_metrics.csv", {"split", "accuracy", "loss"});
    csv.row({"train", format_number(outcome.report.train_accuracy), format_number(outcome.report.train_loss)});
    csv.row({"test", format_number(outcome.report.test_accuracy), format_number(outcome.report.test_loss)});
    return outcome;
}

TrainOutcome cmd_train(const RunConfig& cfg_in, const fs::path& out, const TrainOptions& opts) {
    RunConfig cfg = cfg_in;
    ContinualOptions copts;
    ToyModel model;
    if (opts.resume) {
        Checkpoint ckpt = load_checkpoint(*opts.resume);
        if (ckpt.completed_tasks == 0)
            throw Error(ErrorCode::InvalidConfig, "'" + opts.resume->string() + "' holds no finished task");
        cfg = ckpt.config;
        cfg.out_dir = cfg_in.out_dir;
        copts.start_task = ckpt.completed_tasks + 1;
        copts.initial = std::move(ckpt.acc);
        model = std::move(ckpt.model);
    }
    validate(cfg);
    const TaskStream stream = make_stream(cfg.stream);
    if (!opts.resume) model = obtain_base(cfg, stream, opts.base);

    TrainOutcome outcome;
    copts.optim = cfg.optim;
    copts.seed = cfg.seed;
    copts.on_task_done = [&](const ToyModel& m, const AccuracyMatrix& acc, std::size_t task_id) {
        Checkpoint ckpt;
        ckpt.config = cfg;
        ckpt.model = m;
        ckpt.completed_tasks = task_id;
        ckpt.acc = acc;
        const fs::path dir = out / "checkpoints" / ("task_" + std::to_string(task_id));
        save_checkpoint(dir, ckpt);
        outcome.checkpoints.push_back(dir);
    };
    ContinualResult result = continual_run(stream, std::move(model), copts);

    outcome.acc = std::move(result.acc);
    outcome.metrics = compute_metrics(outcome.acc, cfg.average);
    write_accuracy_csv(out / "accuracy_matrix.csv", outcome.acc);
    write_metrics_csv(out / "metrics.csv", outcome.metrics);
    return outcome;
}

SweepSpec parse_sweep(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= text.size())
        throw Error(ErrorCode::InvalidConfig, "sweep spec must look like axis=v1,v2,... (got '" + text + "')");
    SweepSpec spec;
    spec.axis = text.substr(0, eq);
    if (spec.axis != "budget" && spec.axis != "tau" && spec.axis != "delta" && spec.axis != "mode")
        throw Error(ErrorCode::UnknownAxis, "unknown sweep axis '" + spec.axis + "' (expected budget, tau, delta or mode)");
    std::size_t start = eq + 1;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string value = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (value.empty()) throw Error(ErrorCode::InvalidConfig, "empty value in sweep spec '" + text + "'");
        spec.values.push_back(value);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return spec;
}

RunConfig apply_sweep_value(const RunConfig& cfg, const std::string& axis, const std::string& value) {
    RunConfig out = cfg;
    if (axis == "budget") {
        out.arch.gate.budget_k = parse_count(value, axis);
    } else if (axis == "tau") {
        out.arch.gate.tau = parse_double(value, axis);
    } else if (axis == "delta") {
        out.arch.gate.delta = parse_double(value, axis);
    } else if (axis == "mode") {
        const auto method = parse_method(value);
        if (!method) throw Error(ErrorCode::InvalidConfig, "unknown method '" + value + "' in mode sweep");
        out.arch.method = *method;
        out.arch.gate.mode = method_config(*method).gate;
    } else {
        throw Error(ErrorCode::UnknownAxis, "unknown sweep axis '" + axis + "'");
    }
    validate(out);
    return out;
}

std::vector<SweepRow> cmd_ablate(const RunConfig& cfg, const fs::path& out, const SweepSpec& sweep,
                                 const std::optional<fs::path>& base_dir) {
    validate(cfg);
    // Validate every value before spending time on training.
    std::vector<RunConfig> variants;
    for (const auto& v : sweep.values) variants.push_back(apply_sweep_value(cfg, sweep.axis, v));

    const TaskStream stream = make_stream(cfg.stream);
    ToyModel base;
    if (base_dir) {
        Checkpoint ckpt = load_checkpoint(*base_dir);
        check_base_compatible(cfg, ckpt, *base_dir);
        base = std::move(ckpt.model);
    } else {
        base = pretrain_base(cfg.arch, stream, cfg.pretrain, cfg.seed);
    }

    std::vector<SweepRow> rows;
    CsvWriter csv(out / "sweep.csv", {"axis", "value", "transfer", "average", "last"});
    for (std::size_t i = 0; i < variants.size(); ++i) {
        const RunConfig& v = variants[i];
        ToyModel model = base;
        configure_method(model, v.arch.method, v.arch.gate, v.arch.r_per_task);
        ContinualOptions copts;
        copts.optim = v.optim;
        copts.seed = v.seed;
        const ContinualResult result = continual_run(stream, std::move(model), copts);
        const ContinualMetrics m = compute_metrics(result.acc, v.average);
        rows.push_back({sweep.values[i], m.mean_transfer, m.mean_average, m.mean_last});
        csv.row({sweep.axis, sweep.values[i], format_number(m.mean_transfer), format_number(m.mean_average),
                 format_number(m.mean_last)});
    }
    return rows;
}

AnalyzeOutcome cmd_analyze(const fs::path& checkpoint, const fs::path& out, const std::vector<std::size_t>& tasks_in) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const RunConfig& cfg = ckpt.config;
    const ToyModel& model = ckpt.model;
    const TaskStream stream = make_stream(cfg.stream);
    const std::vector<Batch> tests = task_tests(stream);

    std::vector<std::size_t> tasks = tasks_in.empty() ? cfg.analysis.tasks : tasks_in;
    if (tasks.empty())
        for (std::size_t t = 1; t <= stream.tasks.size(); ++t) tasks.push_back(t);
    std::vector<DenseVector> inputs;
    for (std::size_t t : tasks) {
        if (t < 1 || t > tests.size())
            throw Error(ErrorCode::InvalidConfig, "analysis task " + std::to_string(t) + " is not part of the stream");
        inputs.insert(inputs.end(), tests[t - 1].inputs.begin(), tests[t - 1].inputs.end());
    }

    AnalyzeOutcome outcome;
    outcome.profile = activation_profile(model, inputs);
    outcome.coverage = coverage_count(outcome.profile, cfg.analysis.coverage_fraction);
    outcome.reuse = reuse_matrix(model, tests);

    {
        CsvWriter csv(out / "activation_profile.csv",
                      {"layer", "position", "rank", "task", "mean_abs_weight", "frequency"});
        for (const auto& lp : outcome.profile.layers) {
            for (std::size_t i = 0; i < lp.mean_abs_weight.size(); ++i) {
                csv.row({format_number(lp.layer), layer_position(model, lp.layer), format_number(i),
                         format_number(lp.owner_task[i]), format_number(lp.mean_abs_weight[i]),
                         format_number(lp.frequency[i])});
            }
        }
    }
    {
        CsvWriter csv(out / "coverage.csv", {"layer", "position", "ranks_for_99pct"});
        for (std::size_t l = 0; l < outcome.coverage.size(); ++l)
            csv.row({format_number(l), layer_position(model, l), format_number(outcome.coverage[l])});
    }
    {
        CsvWriter csv(out / "reuse_matrix.csv", task_header("eval_task", outcome.reuse.size()));
        for (std::size_t t = 0; t < outcome.reuse.size(); ++t) {
            std::vector<std::string> fields{format_number(t + 1)};
            for (double v : outcome.reuse[t]) fields.push_back(format_number(v));
            csv.row(fields);
        }
    }
    {
        CsvWriter csv(out / "param_report.csv",
                      {"layer", "position", "d_in", "d_out", "added", "activated", "lora", "moe_lora"});
        for (const auto& row : param_report(model)) {
            csv.row({format_number(row.layer), layer_position(model, row.layer), format_number(row.d_in),
                     format_number(row.d_out), format_number(row.counts.added), format_number(row.counts.activated),
                     format_number(row.lora), format_number(row.moe_lora)});
        }
    }
    return outcome;
}

}  // namespace mora
