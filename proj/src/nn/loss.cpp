// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/loss.hpp"

#include <cmath>
#include <string>

namespace reft::nn {

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T> &logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("cross entropy expects N x T logits, got " + shape_to_string(logits.shape()));
    const std::size_t n = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("cross entropy got " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
    }
    LossResult<T> result{0.0, Tensor<T>(logits.shape())};
    if (n == 0) return result;
    std::vector<double> probs(classes);
    for (std::size_t s = 0; s < n; ++s) {
        const int label = labels[s];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw Error("label " + std::to_string(label) + " at row " + std::to_string(s) + " outside [0, " +
                        std::to_string(classes) + ")");
        }
        const T *row = logits.data() + s * classes;
        double mx = row[0];
        for (std::size_t t = 1; t < classes; ++t) mx = std::max(mx, static_cast<double>(row[t]));
        double sum = 0.0;
        for (std::size_t t = 0; t < classes; ++t) {
            probs[t] = std::exp(static_cast<double>(row[t]) - mx);
            sum += probs[t];
        }
        const double log_z = mx + std::log(sum);
        result.loss += log_z - static_cast<double>(row[label]);
        T *g = result.grad.data() + s * classes;
        for (std::size_t t = 0; t < classes; ++t) {
            const double onehot = static_cast<std::size_t>(label) == t ? 1.0 : 0.0;
            g[t] = static_cast<T>((probs[t] / sum - onehot) / static_cast<double>(n));
        }
    }
    result.loss /= static_cast<double>(n);
    return result;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T> &logits) {
    const std::size_t n = logits.dim(0), classes = logits.dim(1);
    std::vector<int> out(n, 0);
    for (std::size_t s = 0; s < n; ++s) {
        const T *row = logits.data() + s * classes;
        std::size_t best = 0;
        for (std::size_t t = 1; t < classes; ++t) {
            if (row[t] > row[best]) best = t;
        }
        out[s] = static_cast<int>(best);
    }
    return out;
}

template LossResult<float> cross_entropy_loss<float>(const Tensor<float> &, std::span<const int>);
template LossResult<double> cross_entropy_loss<double>(const Tensor<double> &, std::span<const int>);
template std::vector<int> argmax_rows<float>(const Tensor<float> &);
template std::vector<int> argmax_rows<double>(const Tensor<double> &);

} // namespace reft::nn
