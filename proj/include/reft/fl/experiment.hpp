// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reft/fl/distill.hpp"
#include "reft/nn/models.hpp"
#include "reft/nn/optim.hpp"
#include "reft/resources/resources.hpp"

namespace reft::fl {

enum class Strategy { fedavg, static_prune, reft };
std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

struct RawPaths {
    std::string train;
    std::string test;
    std::string public_set; // labels in this file are discarded on load
    std::size_t channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t classes = 10;

    bool operator==(const RawPaths &) const = default;
};

struct DatasetConfig {
    std::string source = "synthetic"; // or "raw"
    std::size_t classes = 4;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 50;
    std::size_t public_size = 400;
    nn::Shape sample_shape{1, 8, 8};
    double separation = 3.0;
    std::size_t modes_per_class = 1;
    // Public samples come from a different centroid draw (classes map by index).
    bool public_shifted = false;
    std::optional<RawPaths> raw;

    bool operator==(const DatasetConfig &) const = default;
};

struct PartitionConfig {
    double alpha = 1.0;
    std::size_t min_shard = 1; // an empty shard has nothing to teach

    bool operator==(const PartitionConfig &) const = default;
};

struct ClientProfile {
    std::uint32_t id = 0;
    double flops = 0.0;
    double width_scale = 1.0; // channel width of this client's base model

    bool operator==(const ClientProfile &) const = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    PartitionConfig partition;
    std::vector<ClientProfile> clients;
    double f_lambda = 0.0;
    nn::ModelId model = nn::ModelId::cnn_small;
    Strategy strategy = Strategy::reft;
    std::size_t rounds = 1; // fedavg only
    nn::TrainConfig train;
    DistillConfig distill;
    resources::CostModel cost;

    // Throws ConfigError on the first semantic violation.
    void validate() const;

    bool operator==(const ExperimentConfig &) const = default;
};

struct RunOptions {
    std::size_t threads = 1;
};

struct MetricRow {
    std::uint32_t round = 0;
    std::optional<std::uint32_t> client; // empty for server rows
    std::string stage;
    double train_loss = 0.0;
    double test_acc = 0.0;
    std::uint64_t bytes_down = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    double pruning_ratio = 0.0;
};

struct ClientReport {
    std::uint32_t id = 0;
    double client_flops = 0.0;
    double pruning_ratio = 0.0;
    double utilization = 0.0; // model FLOPS demand relative to capacity, (1 - P) F_lambda / F_c
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
    std::size_t shard_size = 0;
    std::vector<std::size_t> class_counts;
    double train_loss = 0.0;
    double test_acc = 0.0;
    std::uint32_t max_teacher_passes = 0; // per public sample
};

struct RunReport {
    ExperimentConfig config;
    bool completed = false;
    std::string error;
    std::vector<ClientReport> clients;
    std::vector<MetricRow> metrics;
    resources::BandwidthLedger ledger;
    std::optional<double> central_acc;
    std::optional<DistillResult> distill;
    std::uint64_t global_params = 0;
    std::uint64_t global_flops = 0;

    nlohmann::json to_json() const;
    // round,client_id,stage,train_loss,test_acc,bytes_down,bytes_up,params,flops,pruning_ratio
    void write_metrics_csv(std::ostream &out) const;
};

// Runs the configured strategy. `report` keeps whatever was produced before
// an exception escapes.
void run_strategy(const ExperimentConfig &config, const RunOptions &options, RunReport &report);
RunReport run_strategy(const ExperimentConfig &config, const RunOptions &options = {});

nlohmann::json config_to_json(const ExperimentConfig &config);

} // namespace reft::fl
