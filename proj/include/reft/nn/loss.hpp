// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "reft/nn/tensor.hpp"

namespace reft::nn {

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad; // d loss / d logits, same shape as the logits
};

// Mean negative log-softmax of the true class over an N x T logit batch.
// Gradient is (softmax - onehot) / N.
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T> &logits, std::span<const int> labels);

// Row-wise argmax; ties resolve to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T> &logits);

extern template LossResult<float> cross_entropy_loss<float>(const Tensor<float> &, std::span<const int>);
extern template LossResult<double> cross_entropy_loss<double>(const Tensor<double> &, std::span<const int>);
extern template std::vector<int> argmax_rows<float>(const Tensor<float> &);
extern template std::vector<int> argmax_rows<double>(const Tensor<double> &);

} // namespace reft::nn
