// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "reft/errors.hpp"
#include "reft/sim/commands.hpp"
#include "reft/sim/config.hpp"

using namespace reft;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::string out;
};

sim::SimConfig load(const std::string &path, const Overrides &o) {
    auto cfg = sim::parse_config(path);
    if (o.seed) cfg.experiment.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    return cfg;
}

std::vector<double> parse_ratios(const std::string &text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception &) {
            throw ConfigError("--ratios: '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError("--ratios: no ratios given");
    return out;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Federated pruning + distillation simulator"};
    app.require_subcommand(1);

    Overrides o;
    std::string config_path;
    std::size_t threads = 1;
    auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--seed", o.seed, "Override the run seed");
        cmd->add_option("--threads", threads, "Worker threads for local training")->check(CLI::PositiveNumber);
    };

    auto *run = app.add_subcommand("run", "Run one experiment and write its artifacts");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", o.out, "Output directory (overrides output_dir)");
    add_common(run);

    auto *validate = app.add_subcommand("validate-config", "Check a config and print it with defaults resolved");
    validate->add_option("--config", config_path, "Experiment config (JSON)")->required();
    validate->add_option("--seed", o.seed, "Override the run seed");

    std::string model = "vgg16", ratios = "0,0.3,0.6,0.9";
    std::uint64_t prune_seed = 0;
    auto *prune = app.add_subcommand("prune-report", "Params, FLOPs and serialized size per pruning ratio");
    prune->add_option("--model", model, "mlp-small | cnn-small | resnet8 | vgg16");
    prune->add_option("--ratios", ratios, "Comma separated ratios in [0, 1)");
    prune->add_option("--seed", prune_seed, "Weight init seed (L1 ranking)");
    prune->add_option("--out", o.out, "CSV file (default stdout)");

    std::vector<std::string> compare_configs;
    auto *compare = app.add_subcommand("compare", "Run several configs and write one combined CSV");
    compare->add_option("--config", compare_configs, "Experiment configs (JSON), repeatable")->required();
    compare->add_option("--out", o.out, "Output directory");
    add_common(compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? sim::kOk : sim::kConfigError;
    }

    try {
        if (*validate) {
            const auto cfg = load(config_path, o);
            std::cout << sim::resolved_config(cfg).dump(2) << '\n';
            return sim::kOk;
        }
        if (*run) {
            const auto cfg = load(config_path, o);
            if (cfg.output_dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
            return sim::cmd_run(cfg, cfg.output_dir, threads, std::cerr);
        }
        if (*prune) {
            const auto rows = sim::prune_report(nn::model_id_from_string(model), parse_ratios(ratios), prune_seed);
            if (o.out.empty()) {
                sim::write_prune_report(rows, std::cout);
            } else {
                std::ofstream out(o.out);
                if (!out) throw Error("cannot write " + o.out);
                sim::write_prune_report(rows, out);
            }
            return sim::kOk;
        }
        if (*compare) {
            std::vector<sim::SimConfig> cfgs;
            for (const auto &p : compare_configs) cfgs.push_back(load(p, o));
            if (o.out.empty()) throw ConfigError("compare needs --out");
            std::filesystem::create_directories(o.out);
            std::ofstream csv(std::filesystem::path(o.out) / "compare.csv", std::ios::binary);
            return sim::cmd_compare(cfgs, threads, csv, std::cerr);
        }
    } catch (const ConfigError &e) {
        std::cerr << e.what() << '\n';
        return sim::kConfigError;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return sim::kRuntimeAbort;
    }
    return sim::kOk;
}
