// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "reft/nn/network.hpp"

namespace reft::nn {

// Optimizer buffers. `first` holds the SGD momentum buffer or Adam's first
// moment, `second` Adam's second moment. Buffers are created lazily on the
// first step and always mirror the parameter shapes.
template <typename T>
struct OptimizerState {
    ParamList<T> first;
    ParamList<T> second;
    std::uint64_t step = 0;
};

struct AdamConstants {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
template <typename T>
void sgd_momentum_step(ParamList<T> &params, const ParamList<T> &grads, OptimizerState<T> &state, double lr,
                       double momentum, double weight_decay);

template <typename T>
void adam_step(ParamList<T> &params, const ParamList<T> &grads, OptimizerState<T> &state, double lr,
               const AdamConstants &constants = {});

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total_steps)) / 2, with
// steps past the end clamped to lr_min.
double cosine_anneal_lr(std::uint64_t step, std::uint64_t total_steps, double lr_max, double lr_min);

enum class OptimizerKind { sgd_momentum, adam };
enum class ScheduleKind { constant, cosine };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(ScheduleKind kind);
OptimizerKind optimizer_from_string(std::string_view name);
ScheduleKind schedule_from_string(std::string_view name);

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::sgd_momentum;
    ScheduleKind schedule = ScheduleKind::cosine;
    double lr_max = 0.0025;
    double lr_min = 0.001;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 5;
    std::uint64_t seed = 0;

    // Throws ConfigError on lr_max < lr_min, lr_min <= 0 or batch_size == 0.
    void validate() const;
    // Learning rate for a step of a run lasting total_steps.
    double lr_at(std::uint64_t step, std::uint64_t total_steps) const;

    bool operator==(const TrainConfig &) const = default;
};

extern template void sgd_momentum_step<float>(ParamList<float> &, const ParamList<float> &, OptimizerState<float> &,
                                              double, double, double);
extern template void sgd_momentum_step<double>(ParamList<double> &, const ParamList<double> &,
                                               OptimizerState<double> &, double, double, double);
extern template void adam_step<float>(ParamList<float> &, const ParamList<float> &, OptimizerState<float> &, double,
                                      const AdamConstants &);
extern template void adam_step<double>(ParamList<double> &, const ParamList<double> &, OptimizerState<double> &,
                                       double, const AdamConstants &);

} // namespace reft::nn
