// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "reft/nn/network.hpp"

namespace reft::pruning {

using nn::Architecture;
using nn::Network;

struct HardwareProfile {
    std::uint32_t client_id = 0;
    double flops = 0.0; // compute capacity F_c, floating-point operations per second
    std::optional<std::uint64_t> ram_bytes;
};

// max(0, 1 - F_c / F_lambda). Throws std::invalid_argument on non-positive input.
double variable_pruning_ratio(double client_flops, double f_lambda);

// Ratio applied to every client under static pruning: the weakest client's.
double static_pruning_ratio(std::span<const HardwareProfile> clients, double f_lambda);

// Channels kept out of `channels` at `ratio`: ceil((1 - ratio) * channels), at least 1.
std::size_t keep_count(double ratio, std::size_t channels);

// Sum of |w| over all weights feeding each output channel/unit. Bias excluded.
template <typename T>
std::vector<double> channel_l1_scores(const nn::Tensor<T> &weight);

template <typename T>
std::vector<double> channel_l1_scores(const nn::BasicNetwork<T> &net, std::size_t layer) {
    return channel_l1_scores(net.weight(layer));
}

// Layers whose output channels must be pruned with one shared mask. Every
// residual-add merges the groups of its two operands. A group is not
// prunable when it reaches the network input or produces the network output.
struct DependencyGroup {
    std::vector<std::size_t> layers;
    std::size_t channels = 0;
    bool prunable = true;
};

std::vector<DependencyGroup> build_dependency_graph(const Architecture &arch);

// Per-layer keep vectors, indexed by layer. Empty for layers without
// parameters.
struct ChannelMask {
    std::vector<std::vector<bool>> keep;

    static ChannelMask all_true(const Architecture &arch);
    std::size_t kept(std::size_t layer) const;
    bool is_all_true() const;
    friend bool operator==(const ChannelMask &, const ChannelMask &) = default;
};

// Per-layer channel scores, indexed by layer (empty for layers without parameters).
using LayerScores = std::vector<std::vector<double>>;

template <typename T>
LayerScores l1_scores(const nn::BasicNetwork<T> &net);

// Per group: keep the keep_count(ratio, C) channels with the highest summed
// member score; ties go to the lower channel index. Unprunable groups keep
// everything.
ChannelMask generate_mask(const Architecture &arch, double ratio, const std::vector<DependencyGroup> &groups,
                          const LayerScores &scores);

template <typename T>
ChannelMask l1_mask(const nn::BasicNetwork<T> &net, double ratio) {
    return generate_mask(net.architecture(), ratio, build_dependency_graph(net.architecture()), l1_scores(net));
}

// Throws ShapeError if the mask does not fit the architecture or splits a group.
void validate_mask(const Architecture &arch, const ChannelMask &mask);

// Physically removes masked channels: each pruned layer loses output
// channels, and every consumer loses the matching input slices.
template <typename T>
nn::BasicNetwork<T> apply_speedup(const nn::BasicNetwork<T> &net, const ChannelMask &mask);

struct LayerKeep {
    std::size_t layer = 0;
    std::size_t kept = 0;
    std::size_t total = 0;
};

struct PruningPlan {
    std::uint32_t client_id = 0;
    double client_flops = 0.0;
    double f_lambda = 0.0;
    double ratio = 0.0;
    std::vector<LayerKeep> layers;
    std::uint64_t params_before = 0;
    std::uint64_t params_after = 0;
    std::uint64_t flops_before = 0;
    std::uint64_t flops_after = 0;
};

void to_json(nlohmann::json &j, const PruningPlan &plan);

struct PrunedClientModel {
    PruningPlan plan;
    Network model;
};

// One-shot pruning of the initialized global weights, one model per client,
// at that client's variable ratio.
std::vector<PrunedClientModel> plan_pruning(std::span<const HardwareProfile> clients, double f_lambda,
                                            const Network &base);

// Same, with one fixed ratio for every client.
std::vector<PrunedClientModel> plan_uniform_pruning(std::span<const HardwareProfile> clients, double f_lambda,
                                                    double ratio, const Network &base);

// Linear idealizations N(1 - P) and F(1 - P).
double expected_param_count(double params, double ratio);
double expected_flops(double flops, double ratio);

} // namespace reft::pruning
