// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "reft/nn/tensor.hpp"

namespace reft::nn {

enum class LayerKind { conv2d, dense, relu, maxpool2d, global_avg_pool, flatten, residual_add };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

// Node references inside an Architecture. Non-negative values are layer indices.
inline constexpr int kPrevious = -1;
inline constexpr int kNetworkInput = -2;

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // conv2d: Cin/Cout. dense: input features/units.
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    // conv2d and maxpool2d.
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool bias = true;
    // Producer of this layer's (first) operand.
    int input = kPrevious;
    // residual-add: producer of the second operand.
    int skip = kPrevious;

    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0, bool bias = true);
    static LayerSpec dense(std::size_t in, std::size_t out, bool bias = true);
    static LayerSpec relu();
    static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride);
    static LayerSpec global_avg_pool();
    static LayerSpec flatten();
    static LayerSpec residual_add(int skip);

    LayerSpec &from(int node) {
        input = node;
        return *this;
    }

    bool has_params() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }

    friend bool operator==(const LayerSpec &, const LayerSpec &) = default;
};

// Layer graph with static shape inference. Each layer consumes the output of
// `input` (default: the previous layer); residual-add additionally consumes
// `skip`. Layers are evaluated in declaration order, so every reference must
// point backwards.
class Architecture {
public:
    Architecture() = default;
    Architecture(Shape input_shape, std::vector<LayerSpec> layers);

    const Shape &input_shape() const { return input_shape_; }
    const std::vector<LayerSpec> &layers() const { return layers_; }
    const LayerSpec &layer(std::size_t i) const { return layers_.at(i); }
    std::size_t size() const { return layers_.size(); }

    // Resolved producer of layer i's first operand (kNetworkInput or an index).
    int source(std::size_t i) const { return sources_.at(i); }
    // Per-sample shape of a node's output; kNetworkInput yields the input shape.
    const Shape &value_shape(int node) const;
    const Shape &output_shape() const { return value_shape(static_cast<int>(layers_.size()) - 1); }
    std::size_t num_outputs() const { return output_shape().front(); }

    // Shapes of the weight and (if present) bias tensors of layer i.
    std::vector<Shape> param_shapes(std::size_t i) const;

    friend bool operator==(const Architecture &a, const Architecture &b) {
        return a.input_shape_ == b.input_shape_ && a.layers_ == b.layers_;
    }

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<int> sources_;
    std::vector<Shape> shapes_;
};

} // namespace reft::nn
