// SPDX-License-Identifier: Apache-2.0
#include "reft/fl/fedavg.hpp"

#include <numeric>

#include "reft/errors.hpp"
#include "reft/nn/checkpoint.hpp"

namespace reft::fl {

bool same_architecture(const nn::Architecture &a, const nn::Architecture &b) {
    return nn::checkpoint_header(a) == nn::checkpoint_header(b);
}

nn::Network fedavg_aggregate(std::span<const nn::Network> models, std::span<const std::size_t> shard_sizes) {
    if (models.empty()) throw Error("fedavg: no models to aggregate");
    if (models.size() != shard_sizes.size()) throw Error("fedavg: one shard size per model is required");
    for (std::size_t m = 1; m < models.size(); ++m) {
        if (!same_architecture(models[0].architecture(), models[m].architecture())) {
            throw ArchitectureMismatchError("fedavg cannot average heterogeneous models: model " + std::to_string(m) +
                                            " has " + std::to_string(models[m].param_count()) +
                                            " parameters in a different layout than model 0 (" +
                                            std::to_string(models[0].param_count()) + ")");
        }
    }
    const std::size_t k = std::accumulate(shard_sizes.begin(), shard_sizes.end(), std::size_t{0});
    if (k == 0) throw Error("fedavg: total shard size is zero");

    nn::Network out(models[0].architecture());
    auto &params = out.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
        std::vector<double> acc(params[p].size(), 0.0);
        for (std::size_t m = 0; m < models.size(); ++m) {
            const double w = static_cast<double>(shard_sizes[m]) / static_cast<double>(k);
            const auto &src = models[m].parameters()[p];
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * src[i];
        }
        for (std::size_t i = 0; i < acc.size(); ++i) params[p][i] = static_cast<float>(acc[i]);
    }
    return out;
}

double global_loss(std::span<const double> client_losses, std::span<const std::size_t> shard_sizes) {
    if (client_losses.size() != shard_sizes.size()) throw Error("global_loss: one shard size per loss is required");
    const std::size_t k = std::accumulate(shard_sizes.begin(), shard_sizes.end(), std::size_t{0});
    if (k == 0) throw Error("global_loss: total shard size is zero");
    double acc = 0.0;
    for (std::size_t c = 0; c < client_losses.size(); ++c) {
        acc += static_cast<double>(shard_sizes[c]) / static_cast<double>(k) * client_losses[c];
    }
    return acc;
}

double global_loss(std::span<const ClientState> clients) {
    std::vector<double> losses;
    std::vector<std::size_t> sizes;
    for (const auto &c : clients) {
        losses.push_back(mean_loss(c.model, c.train));
        sizes.push_back(c.train.size());
    }
    return global_loss(losses, sizes);
}

} // namespace reft::fl
