// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace reft::nn {

namespace {

template <typename T>
void check_aligned(const ParamList<T> &params, const ParamList<T> &grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape()) {
            throw ShapeError("gradient " + std::to_string(i) + " has shape " + shape_to_string(grads[i].shape()) +
                             ", parameter has " + shape_to_string(params[i].shape()));
        }
    }
}

template <typename T>
void ensure_buffers(ParamList<T> &buffers, const ParamList<T> &params) {
    if (buffers.size() == params.size()) return;
    buffers.clear();
    for (const auto &p : params) buffers.emplace_back(p.shape());
}

} // namespace

template <typename T>
void sgd_momentum_step(ParamList<T> &params, const ParamList<T> &grads, OptimizerState<T> &state, double lr,
                       double momentum, double weight_decay) {
    check_aligned(params, grads);
    ensure_buffers(state.first, params);
    const T lr_t = static_cast<T>(lr), mom = static_cast<T>(momentum), wd = static_cast<T>(weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
        T *p = params[i].data();
        T *v = state.first[i].data();
        const T *g = grads[i].data();
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            v[j] = mom * v[j] + g[j] + wd * p[j];
            p[j] -= lr_t * v[j];
        }
    }
    ++state.step;
}

template <typename T>
void adam_step(ParamList<T> &params, const ParamList<T> &grads, OptimizerState<T> &state, double lr,
               const AdamConstants &c) {
    check_aligned(params, grads);
    ensure_buffers(state.first, params);
    ensure_buffers(state.second, params);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        T *p = params[i].data();
        T *m = state.first[i].data();
        T *v = state.second[i].data();
        const T *g = grads[i].data();
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            m[j] = static_cast<T>(c.beta1 * m[j] + (1.0 - c.beta1) * g[j]);
            v[j] = static_cast<T>(c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j]);
            const double mhat = m[j] / correction1;
            const double vhat = v[j] / correction2;
            p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + c.eps));
        }
    }
}

double cosine_anneal_lr(std::uint64_t step, std::uint64_t total_steps, double lr_max, double lr_min) {
    if (total_steps == 0 || step >= total_steps) return lr_min;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::adam ? "adam" : "sgd-momentum";
}

std::string_view to_string(ScheduleKind kind) {
    return kind == ScheduleKind::constant ? "constant" : "cosine";
}

OptimizerKind optimizer_from_string(std::string_view name) {
    if (name == "sgd-momentum") return OptimizerKind::sgd_momentum;
    if (name == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd-momentum or adam)");
}

ScheduleKind schedule_from_string(std::string_view name) {
    if (name == "constant") return ScheduleKind::constant;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule '" + std::string(name) + "' (expected constant or cosine)");
}

void TrainConfig::validate() const {
    if (schedule == ScheduleKind::cosine) {
        if (!(lr_min > 0.0)) throw ConfigError("lr_min must be positive");
        if (lr_max < lr_min) throw ConfigError("lr_max must be >= lr_min");
    } else if (!(lr_max >= 0.0)) {
        throw ConfigError("lr_max must be non-negative");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (momentum < 0.0 || weight_decay < 0.0) throw ConfigError("momentum and weight_decay must be non-negative");
}

double TrainConfig::lr_at(std::uint64_t step, std::uint64_t total_steps) const {
    return schedule == ScheduleKind::constant ? lr_max : cosine_anneal_lr(step, total_steps, lr_max, lr_min);
}

template void sgd_momentum_step<float>(ParamList<float> &, const ParamList<float> &, OptimizerState<float> &, double,
                                       double, double);
template void sgd_momentum_step<double>(ParamList<double> &, const ParamList<double> &, OptimizerState<double> &,
                                        double, double, double);
template void adam_step<float>(ParamList<float> &, const ParamList<float> &, OptimizerState<float> &, double,
                               const AdamConstants &);
template void adam_step<double>(ParamList<double> &, const ParamList<double> &, OptimizerState<double> &, double,
                                const AdamConstants &);

} // namespace reft::nn
