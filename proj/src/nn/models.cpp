// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/models.hpp"

#include <cmath>
#include <string>

namespace reft::nn {

std::string_view to_string(ModelId id) {
    switch (id) {
    case ModelId::mlp_small: return "mlp-small";
    case ModelId::cnn_small: return "cnn-small";
    case ModelId::resnet8: return "resnet8";
    case ModelId::vgg16: return "vgg16";
    }
    return "unknown";
}

ModelId model_id_from_string(std::string_view name) {
    if (name == "mlp-small") return ModelId::mlp_small;
    if (name == "cnn-small") return ModelId::cnn_small;
    if (name == "resnet8") return ModelId::resnet8;
    if (name == "vgg16") return ModelId::vgg16;
    throw ConfigError("unknown model '" + std::string(name) + "' (expected mlp-small, cnn-small, resnet8 or vgg16)");
}

namespace {

std::size_t scaled(std::size_t width, double scale) {
    const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale));
    return w == 0 ? 1 : w;
}

std::vector<LayerSpec> mlp_small(const Shape &input, std::size_t classes, double s) {
    const std::size_t h1 = scaled(64, s), h2 = scaled(32, s);
    return {LayerSpec::flatten(), LayerSpec::dense(shape_size(input), h1), LayerSpec::relu(),
            LayerSpec::dense(h1, h2), LayerSpec::relu(), LayerSpec::dense(h2, classes)};
}

std::vector<LayerSpec> cnn_small(const Shape &input, std::size_t classes, double s) {
    if (input.size() != 3) throw ShapeError("cnn-small needs a C,H,W input");
    const std::size_t c1 = scaled(16, s), c2 = scaled(32, s), hidden = scaled(64, s);
    const std::size_t h = input[1] / 2 / 2, w = input[2] / 2 / 2;
    return {LayerSpec::conv2d(input[0], c1, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
            LayerSpec::conv2d(c1, c2, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
            LayerSpec::flatten(), LayerSpec::dense(c2 * h * w, hidden), LayerSpec::relu(),
            LayerSpec::dense(hidden, classes)};
}

std::vector<LayerSpec> resnet8(const Shape &input, std::size_t classes, double s) {
    if (input.size() != 3) throw ShapeError("resnet8 needs a C,H,W input");
    const std::size_t w1 = scaled(176, s), w2 = scaled(352, s), w3 = scaled(704, s);
    std::vector<LayerSpec> l;
    auto last = [&] { return static_cast<int>(l.size()) - 1; };

    l.push_back(LayerSpec::conv2d(input[0], w1, 3, 1, 1));
    l.push_back(LayerSpec::relu());
    // Stage 1: identity shortcut.
    int block_in = last();
    l.push_back(LayerSpec::conv2d(w1, w1, 3, 1, 1));
    l.push_back(LayerSpec::relu());
    l.push_back(LayerSpec::conv2d(w1, w1, 3, 1, 1));
    l.push_back(LayerSpec::residual_add(block_in));
    l.push_back(LayerSpec::relu());

    auto down_block = [&](std::size_t in, std::size_t out) {
        const int bin = last();
        l.push_back(LayerSpec::conv2d(in, out, 3, 2, 1));
        l.push_back(LayerSpec::relu());
        l.push_back(LayerSpec::conv2d(out, out, 3, 1, 1));
        const int main_out = last();
        l.push_back(LayerSpec::conv2d(in, out, 1, 2, 0).from(bin));
        l.push_back(LayerSpec::residual_add(main_out));
        l.push_back(LayerSpec::relu());
    };
    down_block(w1, w2);
    down_block(w2, w3);

    l.push_back(LayerSpec::global_avg_pool());
    l.push_back(LayerSpec::dense(w3, classes));
    return l;
}

std::vector<LayerSpec> vgg16(const Shape &input, std::size_t classes, double s) {
    if (input.size() != 3) throw ShapeError("vgg16 needs a C,H,W input");
    constexpr int kPool = 0;
    constexpr int cfg[] = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, kPool,
                           512, 512, 512, kPool, 512, 512, 512, kPool};
    std::vector<LayerSpec> l;
    std::size_t c = input[0], h = input[1], w = input[2];
    for (int v : cfg) {
        if (v == kPool) {
            l.push_back(LayerSpec::maxpool2d(2, 2));
            h /= 2;
            w /= 2;
            continue;
        }
        const std::size_t out = scaled(static_cast<std::size_t>(v), s);
        l.push_back(LayerSpec::conv2d(c, out, 3, 1, 1));
        l.push_back(LayerSpec::relu());
        c = out;
    }
    const std::size_t fc = scaled(4096, s);
    l.push_back(LayerSpec::flatten());
    l.push_back(LayerSpec::dense(c * h * w, fc));
    l.push_back(LayerSpec::relu());
    l.push_back(LayerSpec::dense(fc, fc));
    l.push_back(LayerSpec::relu());
    l.push_back(LayerSpec::dense(fc, classes));
    return l;
}

} // namespace

Architecture make_architecture(ModelId id, const Shape &input_shape, std::size_t classes, double width_scale) {
    if (classes == 0) throw ShapeError("model needs at least one output class");
    if (!(width_scale > 0.0)) throw ShapeError("width_scale must be positive");
    switch (id) {
    case ModelId::mlp_small: return Architecture(input_shape, mlp_small(input_shape, classes, width_scale));
    case ModelId::cnn_small: return Architecture(input_shape, cnn_small(input_shape, classes, width_scale));
    case ModelId::resnet8: return Architecture(input_shape, resnet8(input_shape, classes, width_scale));
    case ModelId::vgg16: return Architecture(input_shape, vgg16(input_shape, classes, width_scale));
    }
    throw ShapeError("unknown model id");
}

Architecture reference_vgg16() { return make_architecture(ModelId::vgg16, {3, 32, 32}, 10); }

Architecture reference_resnet8() { return make_architecture(ModelId::resnet8, {3, 32, 32}, 10); }

} // namespace reft::nn
