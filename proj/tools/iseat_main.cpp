#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iseat/runner.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> precision;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_overrides = true) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    if (with_overrides) {
        cmd->add_option("--seed", args.seed, "override the config seed");
        cmd->add_option("--precision", args.precision, "override precision")
            ->check(CLI::IsMember({"f32", "f64"}));
    }
}

std::string resolve_out(const CommonArgs& args, const iseat::ExperimentConfig& cfg,
                        const std::string& fallback) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    return fallback;
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const iseat::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const iseat::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const iseat::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const iseat::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial training laboratory: ISEAT and baselines on dense networks"};
    app.require_subcommand(1);

    CommonArgs train_args, attack_args, margin_args, landscape_args, analyze_args;
    std::string checkpoint_path;
    std::vector<std::string> compare_configs;
    std::string compare_out = "compare-out";

    auto* train = app.add_subcommand("train", "train a model per the config");
    add_common(train, train_args);

    auto* attack = app.add_subcommand("attack", "clean and robust accuracy of a checkpoint");
    auto* margin = app.add_subcommand("margin", "per-sample margins along the PGD direction");
    auto* landscape = app.add_subcommand("landscape", "loss surface grid around one sample");
    auto* analyze = app.add_subcommand("analyze", "vulnerability statistics over the train split");
    for (auto [cmd, args] : {std::pair{attack, &attack_args}, std::pair{margin, &margin_args},
                             std::pair{landscape, &landscape_args},
                             std::pair{analyze, &analyze_args}}) {
        cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint (JSON)")->required();
        add_common(cmd, *args, false);
    }

    auto* compare = app.add_subcommand("compare", "run several configs and tabulate results");
    compare->add_option("configs", compare_configs, "member config files")->required();
    compare->add_option("--out", compare_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed())
        return run_guarded([&] {
            const auto cfg = iseat::load_experiment_config(train_args.config_path,
                                                           train_args.seed,
                                                           train_args.precision);
            const auto summary =
                iseat::run_experiment(cfg, resolve_out(train_args, cfg, "out-" + cfg.label));
            std::cout << "wrote " << summary.out_dir << " (best epoch " << summary.best_epoch
                      << ", robust acc " << iseat::fmt9(summary.best_robust_acc) << ")\n";
        });

    const auto analysis = [&](const CommonArgs& args, const std::string& suffix, auto&& fn) {
        return run_guarded([&] {
            const auto cfg = iseat::load_experiment_config(args.config_path);
            const auto ck = iseat::load_checkpoint(checkpoint_path);
            fn(ck, cfg, resolve_out(args, cfg, suffix + "-" + cfg.label));
        });
    };
    if (attack->parsed()) return analysis(attack_args, "attack", iseat::cmd_attack);
    if (margin->parsed()) return analysis(margin_args, "margin", iseat::cmd_margin);
    if (landscape->parsed()) return analysis(landscape_args, "landscape", iseat::cmd_landscape);
    if (analyze->parsed()) return analysis(analyze_args, "analyze", iseat::cmd_analyze);

    if (compare->parsed())
        return run_guarded([&] {
            iseat::cmd_compare(compare_configs, compare_out, iseat::thread_cap_from_env());
        });

    return 0;
}
