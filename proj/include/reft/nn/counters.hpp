// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "reft/nn/architecture.hpp"
#include "reft/nn/network.hpp"

namespace reft::nn {

// Forward-pass operation count for one sample.
//
// Convention: one multiply-accumulate is one FLOP (bias adds are folded into
// the accumulation). ReLU, pooling and residual adds cost one FLOP per output
// element; flatten is free. `total_2x()` is the alternative convention that
// counts a MAC as two FLOPs.
struct FlopCount {
    std::uint64_t macs = 0;
    std::uint64_t elementwise = 0;

    std::uint64_t total() const { return macs + elementwise; }
    std::uint64_t total_2x() const { return 2 * macs + elementwise; }
};

std::uint64_t count_params(const Architecture &arch);

template <typename T>
std::uint64_t count_params(const BasicNetwork<T> &net) {
    return count_params(net.architecture());
}

FlopCount count_flop_breakdown(const Architecture &arch);

inline std::uint64_t count_flops(const Architecture &arch) { return count_flop_breakdown(arch).total(); }

// Same layers evaluated at a different per-sample input shape.
std::uint64_t count_flops(const Architecture &arch, const Shape &input_shape);

} // namespace reft::nn
