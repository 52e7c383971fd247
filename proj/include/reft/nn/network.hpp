// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "reft/nn/architecture.hpp"
#include "reft/nn/tensor.hpp"

namespace reft::nn {

template <typename T>
using ParamList = std::vector<Tensor<T>>;

// An Architecture plus its parameter tensors. Parameters are stored flat in
// declaration order (weight then bias for each conv2d/dense layer).
//
// forward() caches the activations needed by backward(); predict() does not
// touch the cache. A network is a single-threaded unit.
template <typename T>
class BasicNetwork {
public:
    BasicNetwork() = default;
    explicit BasicNetwork(Architecture arch);

    const Architecture &architecture() const { return arch_; }

    // Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    void init_kaiming_uniform(std::uint64_t seed);

    ParamList<T> &parameters() { return params_; }
    const ParamList<T> &parameters() const { return params_; }

    std::optional<std::size_t> weight_index(std::size_t layer) const { return weight_idx_.at(layer); }
    std::optional<std::size_t> bias_index(std::size_t layer) const { return bias_idx_.at(layer); }
    Tensor<T> &weight(std::size_t layer) { return params_.at(weight_idx_.at(layer).value()); }
    const Tensor<T> &weight(std::size_t layer) const { return params_.at(weight_idx_.at(layer).value()); }
    Tensor<T> *bias(std::size_t layer);
    const Tensor<T> *bias(std::size_t layer) const;

    std::size_t param_count() const;

    // batch: N followed by the architecture's input shape. Returns N x outputs.
    Tensor<T> forward(const Tensor<T> &batch);
    Tensor<T> predict(const Tensor<T> &batch) const;

    // Gradients of every parameter, aligned with parameters(). Consumes the
    // cache of the last forward().
    ParamList<T> backward(const Tensor<T> &logits_grad);

    template <typename U>
    BasicNetwork<U> cast() const {
        BasicNetwork<U> out(arch_);
        for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i] = params_[i].template cast<U>();
        return out;
    }

private:
    struct Cache {
        std::vector<Tensor<T>> values; // index 0: input, i + 1: output of layer i
        std::vector<std::vector<std::uint32_t>> argmax;
    };

    Tensor<T> run(const Tensor<T> &batch, Cache *cache) const;
    const Tensor<T> &value(const std::vector<Tensor<T>> &values, int node) const {
        return values[static_cast<std::size_t>(node + 1 < 0 ? 0 : node + 1)];
    }

    Architecture arch_;
    ParamList<T> params_;
    std::vector<std::optional<std::size_t>> weight_idx_;
    std::vector<std::optional<std::size_t>> bias_idx_;
    std::optional<Cache> cache_;
};

using Network = BasicNetwork<float>;
using NetworkF64 = BasicNetwork<double>;

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

} // namespace reft::nn
