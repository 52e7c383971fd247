// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "reft/nn/counters.hpp"

namespace reft::nn {

namespace {

constexpr std::string_view kMagic = "reft-checkpoint";

std::array<char, 4> to_le(float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    return {static_cast<char>(bits & 0xffu), static_cast<char>((bits >> 8) & 0xffu),
            static_cast<char>((bits >> 16) & 0xffu), static_cast<char>((bits >> 24) & 0xffu)};
}

float from_le(const unsigned char *p) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

std::string expect_line(std::istream &in, std::string_view what) {
    std::string line;
    if (!std::getline(in, line)) throw DataFormatError("checkpoint truncated while reading " + std::string(what));
    return line;
}

std::size_t parse_field(const std::string &token, std::string_view key) {
    const std::string prefix = std::string(key) + "=";
    if (token.rfind(prefix, 0) != 0) {
        throw DataFormatError("checkpoint layer field '" + token + "' where '" + prefix + "' was expected");
    }
    return static_cast<std::size_t>(std::stoll(token.substr(prefix.size())));
}

int parse_ref(const std::string &token, std::string_view key) {
    const std::string prefix = std::string(key) + "=";
    if (token.rfind(prefix, 0) != 0) {
        throw DataFormatError("checkpoint layer field '" + token + "' where '" + prefix + "' was expected");
    }
    return std::stoi(token.substr(prefix.size()));
}

} // namespace

std::string checkpoint_header(const Architecture &arch) {
    std::ostringstream out;
    out << kMagic << ' ' << kCheckpointVersion << '\n';
    out << "input";
    for (auto e : arch.input_shape()) out << ' ' << e;
    out << '\n' << "layers " << arch.size() << '\n';
    for (const auto &l : arch.layers()) {
        out << to_string(l.kind) << " in=" << l.in_channels << " out=" << l.out_channels << " kernel=" << l.kernel
            << " stride=" << l.stride << " padding=" << l.padding << " bias=" << (l.bias ? 1 : 0)
            << " input=" << l.input << " skip=" << l.skip << '\n';
    }
    out << "params " << count_params(arch) << '\n' << "end\n";
    return out.str();
}

std::uint64_t checkpoint_size(const Architecture &arch) {
    return checkpoint_header(arch).size() + 4 * count_params(arch);
}

void write_checkpoint(const Network &net, std::ostream &out) {
    out << checkpoint_header(net.architecture());
    for (const auto &p : net.parameters()) {
        for (float v : p.values()) {
            const auto bytes = to_le(v);
            out.write(bytes.data(), bytes.size());
        }
    }
    if (!out) throw Error("failed writing checkpoint");
}

Network read_checkpoint(std::istream &in) {
    std::istringstream magic(expect_line(in, "magic"));
    std::string word;
    int version = 0;
    magic >> word >> version;
    if (word != kMagic) throw DataFormatError("not a checkpoint (bad magic '" + word + "')");
    if (version != kCheckpointVersion) {
        throw DataFormatError("unsupported checkpoint version " + std::to_string(version));
    }

    std::istringstream input_line(expect_line(in, "input shape"));
    input_line >> word;
    if (word != "input") throw DataFormatError("checkpoint missing input shape line");
    Shape input_shape;
    for (std::size_t e; input_line >> e;) input_shape.push_back(e);

    std::istringstream count_line(expect_line(in, "layer count"));
    std::size_t layer_count = 0;
    count_line >> word >> layer_count;
    if (word != "layers") throw DataFormatError("checkpoint missing layer count");

    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < layer_count; ++i) {
        std::istringstream ls(expect_line(in, "layer spec"));
        std::array<std::string, 9> tok;
        for (auto &t : tok) ls >> t;
        LayerSpec l;
        l.kind = layer_kind_from_string(tok[0]);
        l.in_channels = parse_field(tok[1], "in");
        l.out_channels = parse_field(tok[2], "out");
        l.kernel = parse_field(tok[3], "kernel");
        l.stride = parse_field(tok[4], "stride");
        l.padding = parse_field(tok[5], "padding");
        l.bias = parse_field(tok[6], "bias") != 0;
        l.input = parse_ref(tok[7], "input");
        l.skip = parse_ref(tok[8], "skip");
        layers.push_back(l);
    }

    std::istringstream params_line(expect_line(in, "parameter count"));
    std::uint64_t declared = 0;
    params_line >> word >> declared;
    if (word != "params") throw DataFormatError("checkpoint missing parameter count");
    if (expect_line(in, "header terminator") != "end") throw DataFormatError("checkpoint header not terminated");

    Network net(Architecture(std::move(input_shape), std::move(layers)));
    if (declared != net.param_count()) {
        throw DataFormatError("checkpoint declares " + std::to_string(declared) + " parameters, architecture has " +
                              std::to_string(net.param_count()));
    }
    std::vector<unsigned char> buf;
    for (auto &p : net.parameters()) {
        buf.resize(p.size() * 4);
        in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw DataFormatError("checkpoint payload truncated");
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = from_le(buf.data() + 4 * i);
    }
    return net;
}

std::string encode_checkpoint(const Network &net) {
    std::ostringstream out(std::ios::binary);
    write_checkpoint(net, out);
    return std::move(out).str();
}

Network decode_checkpoint(std::string_view bytes) {
    std::istringstream in(std::string(bytes), std::ios::binary);
    return read_checkpoint(in);
}

void save_checkpoint(const Network &net, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    write_checkpoint(net, out);
}

Network load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return read_checkpoint(in);
}

} // namespace reft::nn
