// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "reft/fl/client.hpp"

namespace reft::fl {

bool same_architecture(const nn::Architecture &a, const nn::Architecture &b);

// Parameter-wise mean weighted by k_c / k, reduced in the given order.
// Throws ArchitectureMismatchError unless every model has the same layout.
nn::Network fedavg_aggregate(std::span<const nn::Network> models, std::span<const std::size_t> shard_sizes);

// sum_c (k_c / k) * loss_c
double global_loss(std::span<const double> client_losses, std::span<const std::size_t> shard_sizes);
// Same, with loss_c the mean cross-entropy of each client's model on its own shard.
double global_loss(std::span<const ClientState> clients);

} // namespace reft::fl
