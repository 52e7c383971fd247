// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/architecture.hpp"

#include <array>
#include <sstream>
#include <utility>

namespace reft::nn {

std::string shape_to_string(const Shape &shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ')';
    return out.str();
}

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 7> kKindNames{{
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::dense, "dense"},
    {LayerKind::relu, "relu"},
    {LayerKind::maxpool2d, "maxpool2d"},
    {LayerKind::global_avg_pool, "global-avg-pool"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::residual_add, "residual-add"},
}};

} // namespace

std::string_view to_string(LayerKind kind) {
    for (const auto &[k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
    for (const auto &[k, n] : kKindNames) {
        if (n == name) return k;
    }
    throw ShapeError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    s.bias = bias;
    return s;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_channels = in;
    s.out_channels = out;
    s.bias = bias;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::residual_add(int skip) {
    LayerSpec s;
    s.kind = LayerKind::residual_add;
    s.skip = skip;
    return s;
}

Architecture::Architecture(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (input_shape_.empty() || shape_size(input_shape_) == 0) {
        throw ShapeError("network input shape must be non-empty with positive extents");
    }
    if (layers_.empty()) {
        throw ShapeError("network has no layers");
    }
    sources_.reserve(layers_.size());
    shapes_.reserve(layers_.size());

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec &l = layers_[i];
        const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + "): ";
        auto resolve = [&](int ref) -> int {
            if (ref == kPrevious) return static_cast<int>(i) - 1 < 0 ? kNetworkInput : static_cast<int>(i) - 1;
            if (ref == kNetworkInput) return kNetworkInput;
            if (ref < 0 || ref >= static_cast<int>(i)) {
                throw ShapeError(where + "input reference " + std::to_string(ref) + " is not an earlier layer");
            }
            return ref;
        };
        const int src = resolve(l.input);
        sources_.push_back(src);
        const Shape &in = value_shape(src);
        Shape out;

        switch (l.kind) {
        case LayerKind::conv2d: {
            if (l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
                throw ShapeError(where + "channels, kernel and stride must be positive");
            }
            if (l.padding >= l.kernel) throw ShapeError(where + "padding must be smaller than kernel");
            if (in.size() != 3) throw ShapeError(where + "expects a C,H,W input, got " + shape_to_string(in));
            if (in[0] != l.in_channels) {
                throw ShapeError(where + "expects " + std::to_string(l.in_channels) + " input channels, got " +
                                 std::to_string(in[0]));
            }
            const std::size_t h = in[1] + 2 * l.padding, w = in[2] + 2 * l.padding;
            if (h < l.kernel || w < l.kernel) throw ShapeError(where + "kernel larger than padded input");
            out = {l.out_channels, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
            break;
        }
        case LayerKind::dense:
            if (l.in_channels == 0 || l.out_channels == 0) throw ShapeError(where + "features must be positive");
            if (in.size() != 1 || in[0] != l.in_channels) {
                throw ShapeError(where + "expects " + std::to_string(l.in_channels) + " input features, got " +
                                 shape_to_string(in));
            }
            out = {l.out_channels};
            break;
        case LayerKind::relu:
            out = in;
            break;
        case LayerKind::maxpool2d:
            if (l.kernel == 0 || l.stride == 0) throw ShapeError(where + "kernel and stride must be positive");
            if (in.size() != 3 || in[1] < l.kernel || in[2] < l.kernel) {
                throw ShapeError(where + "input " + shape_to_string(in) + " too small for pooling");
            }
            out = {in[0], (in[1] - l.kernel) / l.stride + 1, (in[2] - l.kernel) / l.stride + 1};
            break;
        case LayerKind::global_avg_pool:
            if (in.size() != 3) throw ShapeError(where + "expects a C,H,W input, got " + shape_to_string(in));
            out = {in[0]};
            break;
        case LayerKind::flatten:
            out = {shape_size(in)};
            break;
        case LayerKind::residual_add: {
            if (l.skip == kPrevious) throw ShapeError(where + "skip operand must be given explicitly");
            const Shape &other = value_shape(resolve(l.skip));
            if (other != in) {
                throw ShapeError(where + "operand shapes differ: " + shape_to_string(in) + " vs " +
                                 shape_to_string(other));
            }
            out = in;
            break;
        }
        }
        shapes_.push_back(std::move(out));
    }
    if (output_shape().size() != 1) {
        throw ShapeError("network output must be a feature vector, got " + shape_to_string(output_shape()));
    }
}

const Shape &Architecture::value_shape(int node) const {
    if (node == kNetworkInput) return input_shape_;
    return shapes_.at(static_cast<std::size_t>(node));
}

std::vector<Shape> Architecture::param_shapes(std::size_t i) const {
    const LayerSpec &l = layers_.at(i);
    std::vector<Shape> shapes;
    if (l.kind == LayerKind::conv2d) {
        shapes.push_back({l.out_channels, l.in_channels, l.kernel, l.kernel});
    } else if (l.kind == LayerKind::dense) {
        shapes.push_back({l.out_channels, l.in_channels});
    } else {
        return shapes;
    }
    if (l.bias) shapes.push_back({l.out_channels});
    return shapes;
}

} // namespace reft::nn
