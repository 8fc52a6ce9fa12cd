// Copyright 2026 The MoRA Desk Authors
// SPDX-License-Identifier: Apache-2.0

// mora: pretrain, train, ablate and analyze runs of the rank-mixture adapter.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mora/commands.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool need_config) {
    auto* opt = cmd->add_option("--config", flags.config, "Run configuration (JSON)");
    if (need_config) opt->required();
    cmd->add_option("--seed", flags.seed, "Overrides both the run seed and the stream seed");
    cmd->add_option("--out", flags.out, "Output directory (default: out_dir from the config)");
    cmd->add_option("--mode", flags.mode,
                    "Method: self_adaptive, self_sparse, self_raw, router_lora, router_rank, inc_lora, seq_lora");
}

mora::RunConfig load(const CommonFlags& flags) {
    mora::RunConfig cfg = flags.config.empty() ? mora::RunConfig{} : mora::load_run_config(flags.config);
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.stream.seed = *flags.seed;
    }
    if (flags.mode) cfg = mora::apply_sweep_value(cfg, "mode", *flags.mode);
    mora::validate(cfg);
    return cfg;
}

std::optional<std::filesystem::path> as_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
}

bool is_usage_error(mora::ErrorCode code) {
    return code == mora::ErrorCode::InvalidConfig || code == mora::ErrorCode::UnknownAxis;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rank-mixture adapters for continual learning: desk-scale experiments"};
    app.require_subcommand(1);

    CommonFlags pre_flags;
    auto* pre = app.add_subcommand("pretrain", "Pretrain the frozen base network");
    add_common(pre, pre_flags, true);

    CommonFlags train_flags;
    std::string base_dir;
    std::string resume_dir;
    auto* train = app.add_subcommand("train", "Run the continual task stream");
    add_common(train, train_flags, false);
    train->add_option("--base", base_dir, "Pretrained base checkpoint (pretrains in-process when omitted)");
    train->add_option("--resume", resume_dir, "Task checkpoint to resume from (its config is reused)");

    CommonFlags ablate_flags;
    std::string sweep;
    std::string ablate_base;
    auto* ablate = app.add_subcommand("ablate", "Sweep one gate hyperparameter");
    add_common(ablate, ablate_flags, false);
    ablate->add_option("--sweep", sweep, "axis=v1,v2,... with axis one of budget, tau, delta, mode")->required();
    ablate->add_option("--base", ablate_base, "Pretrained base checkpoint");

    std::string ckpt_dir;
    std::optional<std::string> analyze_out;
    std::vector<std::size_t> analyze_tasks;
    auto* analyze = app.add_subcommand("analyze", "Activation profile, coverage and reuse of a checkpoint");
    analyze->add_option("--checkpoint", ckpt_dir, "Checkpoint directory")->required();
    analyze->add_option("--out", analyze_out, "Output directory (default: the checkpoint directory)");
    analyze->add_option("--tasks", analyze_tasks, "1-based tasks whose test splits are analyzed (default: all)")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*pre) {
            const auto cfg = load(pre_flags);
            const auto out = mora::resolve_out_dir(cfg, pre_flags.out);
            const auto res = mora::cmd_pretrain(cfg, out);
            std::cout << "pretrained base: test accuracy " << res.report.test_accuracy << "\n"
                      << "checkpoint " << res.checkpoint_dir.string() << " sha256 " << res.digest << "\n";
        } else if (*train) {
            const auto cfg = load(train_flags);
            const auto out = mora::resolve_out_dir(cfg, train_flags.out);
            mora::TrainOptions opts;
            opts.base = as_path(base_dir);
            opts.resume = as_path(resume_dir);
            const auto res = mora::cmd_train(cfg, out, opts);
            std::cout << "transfer " << res.metrics.mean_transfer << "  average " << res.metrics.mean_average
                      << "  last " << res.metrics.mean_last << "\n"
                      << "wrote " << (out / "metrics.csv").string() << "\n";
        } else if (*ablate) {
            const auto cfg = load(ablate_flags);
            const auto spec = mora::parse_sweep(sweep);
            const auto out = mora::resolve_out_dir(cfg, ablate_flags.out);
            for (const auto& row : mora::cmd_ablate(cfg, out, spec, as_path(ablate_base)))
                std::cout << spec.axis << "=" << row.value << "  last " << row.last << "\n";
            std::cout << "wrote " << (out / "sweep.csv").string() << "\n";
        } else if (*analyze) {
            std::filesystem::path out = analyze_out ? std::filesystem::path(*analyze_out) : std::filesystem::path(ckpt_dir);
            if (analyze_out) out = mora::resolve_out_dir(mora::RunConfig{}, analyze_out);
            const auto res = mora::cmd_analyze(ckpt_dir, out, analyze_tasks);
            for (std::size_t l = 0; l < res.coverage.size(); ++l)
                std::cout << "layer " << l << ": " << res.coverage[l] << " of "
                          << res.profile.layers[l].mean_abs_weight.size() << " ranks cover the activation mass\n";
        }
    } catch (const mora::Error& e) {
        std::cerr << "mora: " << e.what() << "\n";
        return is_usage_error(e.code()) ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "mora: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
