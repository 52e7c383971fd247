// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/counters.hpp"

namespace reft::nn {

std::uint64_t count_params(const Architecture &arch) {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        for (const auto &shape : arch.param_shapes(i)) n += shape_size(shape);
    }
    return n;
}

FlopCount count_flop_breakdown(const Architecture &arch) {
    FlopCount count;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec &l = arch.layer(i);
        const std::uint64_t outputs = shape_size(arch.value_shape(static_cast<int>(i)));
        switch (l.kind) {
        case LayerKind::conv2d:
            count.macs += outputs * l.in_channels * l.kernel * l.kernel;
            break;
        case LayerKind::dense:
            count.macs += outputs * l.in_channels;
            break;
        case LayerKind::relu:
        case LayerKind::maxpool2d:
        case LayerKind::global_avg_pool:
        case LayerKind::residual_add:
            count.elementwise += outputs;
            break;
        case LayerKind::flatten:
            break;
        }
    }
    return count;
}

std::uint64_t count_flops(const Architecture &arch, const Shape &input_shape) {
    return count_flops(Architecture(input_shape, arch.layers()));
}

} // namespace reft::nn
