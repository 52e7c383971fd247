// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "reft/nn/network.hpp"

namespace reft::nn {

// Checkpoint layout: a text header
//
//   reft-checkpoint 1
//   input <extents...>
//   layers <count>
//   <kind> in=.. out=.. kernel=.. stride=.. padding=.. bias=.. input=.. skip=..   (one per layer)
//   params <scalar count>
//   end
//
// followed by the parameters as little-endian float32, in declaration order.
inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_header(const Architecture &arch);
std::uint64_t checkpoint_size(const Architecture &arch);

void write_checkpoint(const Network &net, std::ostream &out);
Network read_checkpoint(std::istream &in);

std::string encode_checkpoint(const Network &net);
Network decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Network &net, const std::filesystem::path &path);
Network load_checkpoint(const std::filesystem::path &path);

} // namespace reft::nn
