// SPDX-License-Identifier: Apache-2.0
#include "reft/fl/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "reft/errors.hpp"
#include "reft/nn/loss.hpp"

namespace reft::fl {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    return mix(seed ^ mix(stream));
}

TrainResult local_train(ClientState &client) {
    const auto &cfg = client.train_config;
    cfg.validate();
    client.train.validate();
    TrainResult result;
    const std::size_t n = client.train.size();
    if (cfg.epochs == 0 || n == 0) return result;

    const std::size_t batch = std::min(cfg.batch_size, n);
    const std::size_t per_epoch = (n + batch - 1) / batch;
    const std::uint64_t total = per_epoch * cfg.epochs;

    std::mt19937_64 rng(client.rng_seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    nn::OptimizerState<float> state;
    std::vector<std::size_t> rows;
    std::vector<int> labels;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t lo = b * batch, hi = std::min(n, lo + batch);
            rows.assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
            labels.clear();
            for (auto r : rows) labels.push_back(client.train.labels[r]);

            const double lr = cfg.lr_at(result.steps, total);
            const auto logits = client.model.forward(data::gather_rows(client.train.samples, rows));
            auto loss = nn::cross_entropy_loss(logits, labels);
            if (!std::isfinite(loss.loss)) {
                std::ostringstream msg;
                msg << "client " << client.id << ": loss became " << loss.loss << " at step " << result.steps
                    << " (epoch " << epoch << ", lr " << lr << ")";
                throw DivergenceError(msg.str());
            }
            const auto grads = client.model.backward(loss.grad);
            if (cfg.optimizer == nn::OptimizerKind::adam) {
                nn::adam_step(client.model.parameters(), grads, state, lr);
            } else {
                nn::sgd_momentum_step(client.model.parameters(), grads, state, lr, cfg.momentum, cfg.weight_decay);
            }
            sum += loss.loss;
            ++result.steps;
        }
        result.epoch_loss.push_back(sum / static_cast<double>(per_epoch));
    }
    return result;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename F>
void for_chunks(const nn::Network &net, const data::LabeledDataset &ds, F &&f) {
    std::vector<std::size_t> rows;
    for (std::size_t lo = 0; lo < ds.size(); lo += kEvalChunk) {
        const std::size_t hi = std::min(ds.size(), lo + kEvalChunk);
        rows.resize(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        f(net.predict(data::gather_rows(ds.samples, rows)),
          std::span<const int>(ds.labels.data() + lo, hi - lo));
    }
}

} // namespace

double accuracy(const nn::Network &net, const data::LabeledDataset &ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for_chunks(net, ds, [&](const nn::Tensor<float> &logits, std::span<const int> labels) {
        const auto pred = nn::argmax_rows(logits);
        for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    });
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double mean_loss(const nn::Network &net, const data::LabeledDataset &ds) {
    if (ds.size() == 0) return 0.0;
    double sum = 0.0;
    for_chunks(net, ds, [&](const nn::Tensor<float> &logits, std::span<const int> labels) {
        sum += nn::cross_entropy_loss(logits, labels).loss * static_cast<double>(labels.size());
    });
    return sum / static_cast<double>(ds.size());
}

} // namespace reft::fl
