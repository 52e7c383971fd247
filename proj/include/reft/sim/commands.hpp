// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reft/nn/models.hpp"
#include "reft/sim/config.hpp"

namespace reft::sim {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeAbort = 2 };

// Writes report.json, metrics.csv, ledger.csv, bandwidth_summary.csv and
// config.resolved.json under out_dir. On an abort the artifacts produced so
// far are still written and kRuntimeAbort is returned.
int cmd_run(const SimConfig &config, const std::filesystem::path &out_dir, std::size_t threads, std::ostream &log);

struct PruneRow {
    double ratio = 0.0;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    std::uint64_t serialized_bytes = 0;
};

// vgg16 and resnet8 use their reference 3x32x32, 10-class shapes; the small
// models use 1x8x8 inputs and 4 classes.
std::vector<PruneRow> prune_report(nn::ModelId model, const std::vector<double> &ratios, std::uint64_t seed = 0);
// ratio,params,flops,serialized_bytes,serialized_mb
void write_prune_report(const std::vector<PruneRow> &rows, std::ostream &out);

// Runs every config (they must share one seed) and writes one row per
// strategy and client plus a server row:
// strategy,client_id,pruning_ratio,params,flops,test_acc,bytes_down,bytes_up,bytes_total
int cmd_compare(const std::vector<SimConfig> &configs, std::size_t threads, std::ostream &csv, std::ostream &log);

} // namespace reft::sim
