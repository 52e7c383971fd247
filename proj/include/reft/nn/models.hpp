// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include "reft/nn/architecture.hpp"

namespace reft::nn {

enum class ModelId { mlp_small, cnn_small, resnet8, vgg16 };

std::string_view to_string(ModelId id);
ModelId model_id_from_string(std::string_view name);

// Builds one of the known topologies for a C,H,W input and `classes` outputs.
// `width_scale` multiplies every hidden width (rounded, at least 1).
//
//   mlp-small  flatten, dense 64, relu, dense 32, relu, dense classes
//   cnn-small  conv3x3 16, relu, pool2, conv3x3 32, relu, pool2, flatten, dense 64, relu, dense classes
//   resnet8    conv3x3 stem 176, then three stages of one basic block each
//              (176, 352, 704 channels; stride-2 1x1 projection shortcuts in
//              stages 2 and 3), global average pool, dense classes
//   vgg16      13 conv3x3 layers (64,64,M,128,128,M,256x3,M,512x3,M,512x3,M)
//              then dense 4096, relu, dense 4096, relu, dense classes
//
// ResNet-8 widths put its float32 payload at ~36.99 MB; VGG-16 with a 4096
// classifier has 33.64 M parameters on 3x32x32 inputs.
Architecture make_architecture(ModelId id, const Shape &input_shape, std::size_t classes, double width_scale = 1.0);

// 3x32x32 input, 10 classes.
Architecture reference_vgg16();
Architecture reference_resnet8();

} // namespace reft::nn
