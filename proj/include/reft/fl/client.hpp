// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "reft/data/dataset.hpp"
#include "reft/nn/network.hpp"
#include "reft/nn/optim.hpp"
#include "reft/pruning/pruning.hpp"

namespace reft::fl {

// splitmix64-style mix of a seed and a stream id. Distinct streams give
// unrelated seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
inline std::uint64_t client_seed(std::uint64_t run_seed, std::uint32_t client_id) {
    return derive_seed(run_seed, 0x10000ull + client_id);
}

// Everything a client owns. Nothing here is ever handed to the server side.
struct ClientState {
    std::uint32_t id = 0;
    nn::Network model;
    data::LabeledDataset train;
    pruning::HardwareProfile profile;
    nn::TrainConfig train_config;
    std::uint64_t rng_seed = 0;
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean minibatch loss per epoch
    std::uint64_t steps = 0;
    double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

// Minibatch training of client.model on client.train. Batches are drawn from a
// shuffle seeded by client.rng_seed, so a run is a pure function of the state.
// Throws DivergenceError (with lr and step) on a non-finite loss.
TrainResult local_train(ClientState &client);

double accuracy(const nn::Network &net, const data::LabeledDataset &ds);
double mean_loss(const nn::Network &net, const data::LabeledDataset &ds);

} // namespace reft::fl
