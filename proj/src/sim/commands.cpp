// SPDX-License-Identifier: Apache-2.0
#include "reft/sim/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "reft/errors.hpp"
#include "reft/nn/checkpoint.hpp"
#include "reft/nn/counters.hpp"
#include "reft/pruning/pruning.hpp"

namespace reft::sim {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

template <typename F>
void write_file(const std::filesystem::path &path, F &&body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    body(out);
}

void write_artifacts(const fl::RunReport &report, const SimConfig &config, const std::filesystem::path &dir) {
    write_file(dir / "config.resolved.json", [&](std::ostream &o) { o << resolved_config(config).dump(2) << '\n'; });
    write_file(dir / "report.json", [&](std::ostream &o) { o << report.to_json().dump(2) << '\n'; });
    write_file(dir / "metrics.csv", [&](std::ostream &o) { report.write_metrics_csv(o); });
    write_file(dir / "ledger.csv", [&](std::ostream &o) { report.ledger.write_csv(o); });
    write_file(dir / "bandwidth_summary.csv", [&](std::ostream &o) { report.ledger.write_summary(o); });
}

} // namespace

int cmd_run(const SimConfig &config, const std::filesystem::path &out_dir, std::size_t threads, std::ostream &log) {
    std::filesystem::create_directories(out_dir);
    fl::RunReport report;
    int code = kOk;
    try {
        fl::run_strategy(config.experiment, {threads}, report);
    } catch (const ConfigError &e) {
        log << "config error: " << e.what() << '\n';
        code = kConfigError;
    } catch (const std::exception &e) {
        log << "run aborted: " << e.what() << '\n';
        code = kRuntimeAbort;
    }
    write_artifacts(report, config, out_dir);
    if (code == kOk) {
        log << fl::to_string(config.experiment.strategy) << ": " << report.clients.size() << " clients, "
            << resources::format_bytes(report.ledger.total_bytes()) << " transferred";
        if (report.central_acc) log << ", central accuracy " << fixed(*report.central_acc, 4);
        log << "\nartifacts in " << out_dir.string() << '\n';
    }
    return code;
}

std::vector<PruneRow> prune_report(nn::ModelId model, const std::vector<double> &ratios, std::uint64_t seed) {
    nn::Architecture arch;
    switch (model) {
    case nn::ModelId::vgg16: arch = nn::reference_vgg16(); break;
    case nn::ModelId::resnet8: arch = nn::reference_resnet8(); break;
    default: arch = nn::make_architecture(model, {1, 8, 8}, 4); break;
    }
    nn::Network net(arch);
    net.init_kaiming_uniform(seed);
    const pruning::HardwareProfile profile{0, 1.0, {}};
    std::vector<PruneRow> rows;
    for (double ratio : ratios) {
        if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("pruning ratio " + std::to_string(ratio) + " is outside [0, 1)");
        const auto pruned = pruning::plan_uniform_pruning({&profile, 1}, 1.0, ratio, net);
        const auto &a = pruned.front().model.architecture();
        rows.push_back({ratio, nn::count_params(a), nn::count_flops(a), nn::checkpoint_size(a)});
    }
    return rows;
}

void write_prune_report(const std::vector<PruneRow> &rows, std::ostream &out) {
    out << "ratio,params,flops,serialized_bytes,serialized_mb\n";
    for (const auto &r : rows) {
        out << fixed(r.ratio, 4) << ',' << r.params << ',' << r.flops << ',' << r.serialized_bytes << ','
            << fixed(static_cast<double>(r.serialized_bytes) / 1e6, 3) << '\n';
    }
}

int cmd_compare(const std::vector<SimConfig> &configs, std::size_t threads, std::ostream &csv, std::ostream &log) {
    if (configs.empty()) throw ConfigError("compare needs at least one config");
    for (const auto &c : configs) {
        if (c.experiment.seed != configs.front().experiment.seed) {
            throw ConfigError("compare: configs must share one seed (got " + std::to_string(c.experiment.seed) +
                              " and " + std::to_string(configs.front().experiment.seed) + ")");
        }
    }
    csv << "strategy,client_id,pruning_ratio,params,flops,test_acc,bytes_down,bytes_up,bytes_total\n";
    for (const auto &c : configs) {
        fl::RunReport report;
        try {
            fl::run_strategy(c.experiment, {threads}, report);
        } catch (const ConfigError &e) {
            log << "config error: " << e.what() << '\n';
            return kConfigError;
        } catch (const std::exception &e) {
            log << fl::to_string(c.experiment.strategy) << " aborted: " << e.what() << '\n';
            return kRuntimeAbort;
        }
        const auto strategy = std::string(fl::to_string(c.experiment.strategy));
        const auto traffic = report.ledger.per_client();
        for (std::size_t i = 0; i < report.clients.size(); ++i) {
            const auto &cr = report.clients[i];
            std::uint64_t down = 0, up = 0;
            for (const auto &t : traffic) {
                if (t.client == cr.id) down = t.down, up = t.up;
            }
            csv << strategy << ',' << cr.id << ',' << fixed(cr.pruning_ratio, 6) << ',' << cr.params << ','
                << cr.flops << ',' << fixed(cr.test_acc, 6) << ',' << down << ',' << up << ',' << down + up << '\n';
        }
        csv << strategy << ",server,0.000000," << report.global_params << ',' << report.global_flops << ','
            << fixed(report.central_acc.value_or(0.0), 6) << ",0,0,0\n";
    }
    return kOk;
}

} // namespace reft::sim
