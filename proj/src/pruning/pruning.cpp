// SPDX-License-Identifier: Apache-2.0
#include "reft/pruning/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "reft/nn/counters.hpp"

namespace reft::pruning {

using nn::LayerKind;
using nn::LayerSpec;

double variable_pruning_ratio(double client_flops, double f_lambda) {
    if (!(client_flops > 0.0) || !(f_lambda > 0.0)) {
        throw std::invalid_argument("client FLOPS and F_lambda must both be positive");
    }
    return std::max(0.0, 1.0 - client_flops / f_lambda);
}

double static_pruning_ratio(std::span<const HardwareProfile> clients, double f_lambda) {
    if (clients.empty()) throw std::invalid_argument("static pruning needs at least one client");
    const auto weakest = std::min_element(clients.begin(), clients.end(),
                                          [](const auto &a, const auto &b) { return a.flops < b.flops; });
    return variable_pruning_ratio(weakest->flops, f_lambda);
}

std::size_t keep_count(double ratio, std::size_t channels) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw std::invalid_argument("pruning ratio must lie in [0, 1)");
    // The slack absorbs representation error, e.g. (1 - 0.8) * 10 = 2.0000000000000004.
    const double exact = (1.0 - ratio) * static_cast<double>(channels);
    const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    return std::clamp<std::size_t>(k, 1, channels);
}

template <typename T>
std::vector<double> channel_l1_scores(const nn::Tensor<T> &weight) {
    if (weight.rank() < 2) throw ShapeError("L1 scores need a dense or conv weight tensor");
    const std::size_t out = weight.dim(0), per = weight.size() / out;
    std::vector<double> scores(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const T *p = weight.data() + o * per;
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) acc += std::abs(static_cast<double>(p[i]));
        scores[o] = acc;
    }
    return scores;
}

template <typename T>
LayerScores l1_scores(const nn::BasicNetwork<T> &net) {
    LayerScores scores(net.architecture().size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (net.architecture().layer(i).has_params()) scores[i] = channel_l1_scores(net.weight(i));
    }
    return scores;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Union-find slots: one per layer plus a trailing slot for the network input.
// Returns, for every layer, the slot that determines its output channels.
std::vector<std::size_t> channel_origins(const Architecture &arch, UnionFind &uf) {
    const std::size_t input_slot = arch.size();
    std::vector<std::size_t> origin(arch.size());
    auto origin_of = [&](int node) { return node == nn::kNetworkInput ? input_slot : origin[node]; };
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerSpec &l = arch.layer(i);
        const int src = arch.source(i);
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
            origin[i] = i;
            break;
        case LayerKind::residual_add: {
            const int skip = l.skip == nn::kPrevious ? src : l.skip;
            uf.unite(origin_of(src), origin_of(skip));
            origin[i] = origin_of(src);
            break;
        }
        case LayerKind::flatten:
            // Flattening keeps the channel identity of a C,H,W input; each
            // channel maps to a contiguous run of H*W features.
        default:
            origin[i] = origin_of(src);
            break;
        }
    }
    return origin;
}

} // namespace

std::vector<DependencyGroup> build_dependency_graph(const Architecture &arch) {
    UnionFind uf(arch.size() + 1);
    const auto origin = channel_origins(arch, uf);
    const std::size_t input_root = uf.find(arch.size());
    const std::size_t output_root = uf.find(origin.back());

    std::vector<DependencyGroup> groups;
    std::vector<std::ptrdiff_t> group_of_root(arch.size() + 1, -1);
    for (std::size_t i = 0; i < arch.size(); ++i) {
        if (!arch.layer(i).has_params()) continue;
        const std::size_t root = uf.find(i);
        if (group_of_root[root] < 0) {
            group_of_root[root] = static_cast<std::ptrdiff_t>(groups.size());
            DependencyGroup g;
            g.channels = arch.layer(i).out_channels;
            g.prunable = root != input_root && root != output_root;
            groups.push_back(std::move(g));
        }
        groups[static_cast<std::size_t>(group_of_root[root])].layers.push_back(i);
    }
    return groups;
}

ChannelMask ChannelMask::all_true(const Architecture &arch) {
    ChannelMask m;
    m.keep.resize(arch.size());
    for (std::size_t i = 0; i < arch.size(); ++i) {
        if (arch.layer(i).has_params()) m.keep[i].assign(arch.layer(i).out_channels, true);
    }
    return m;
}

std::size_t ChannelMask::kept(std::size_t layer) const {
    const auto &k = keep.at(layer);
    return static_cast<std::size_t>(std::count(k.begin(), k.end(), true));
}

bool ChannelMask::is_all_true() const {
    return std::all_of(keep.begin(), keep.end(),
                       [](const auto &k) { return std::all_of(k.begin(), k.end(), [](bool b) { return b; }); });
}

ChannelMask generate_mask(const Architecture &arch, double ratio, const std::vector<DependencyGroup> &groups,
                          const LayerScores &scores) {
    if (scores.size() != arch.size()) throw ShapeError("score table does not match the architecture");
    ChannelMask mask = ChannelMask::all_true(arch);
    for (const auto &g : groups) {
        if (!g.prunable) continue;
        const std::size_t keep = keep_count(ratio, g.channels);
        if (keep == g.channels) continue;
        std::vector<double> total(g.channels, 0.0);
        for (std::size_t layer : g.layers) {
            const auto &s = scores.at(layer);
            if (s.size() != g.channels) {
                throw ShapeError("layer " + std::to_string(layer) + " has " + std::to_string(s.size()) +
                                 " channel scores, its group has " + std::to_string(g.channels) + " channels");
            }
            for (std::size_t c = 0; c < g.channels; ++c) total[c] += s[c];
        }
        std::vector<std::size_t> order(g.channels);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
        std::vector<bool> keep_vec(g.channels, false);
        for (std::size_t r = 0; r < keep; ++r) keep_vec[order[r]] = true;
        for (std::size_t layer : g.layers) mask.keep[layer] = keep_vec;
    }
    return mask;
}

void validate_mask(const Architecture &arch, const ChannelMask &mask) {
    if (mask.keep.size() != arch.size()) {
        throw ShapeError("mask covers " + std::to_string(mask.keep.size()) + " layers, network has " +
                         std::to_string(arch.size()));
    }
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const auto &l = arch.layer(i);
        const std::size_t expected = l.has_params() ? l.out_channels : 0;
        if (mask.keep[i].size() != expected) {
            throw ShapeError("mask for layer " + std::to_string(i) + " has length " +
                             std::to_string(mask.keep[i].size()) + ", expected " + std::to_string(expected));
        }
        if (l.has_params() && mask.kept(i) == 0) {
            throw ShapeError("mask removes every channel of layer " + std::to_string(i));
        }
    }
    for (const auto &g : build_dependency_graph(arch)) {
        for (std::size_t layer : g.layers) {
            if (!g.prunable && mask.kept(layer) != g.channels) {
                throw ShapeError("mask prunes layer " + std::to_string(layer) +
                                 ", which feeds the network output or shares channels with the input");
            }
            if (mask.keep[layer] != mask.keep[g.layers.front()]) {
                throw ShapeError("mask splits dependency group at layer " + std::to_string(layer));
            }
        }
    }
}

template <typename T>
nn::BasicNetwork<T> apply_speedup(const nn::BasicNetwork<T> &net, const ChannelMask &mask) {
    const Architecture &arch = net.architecture();
    validate_mask(arch, mask);

    // Surviving channel (rank 3) or feature (rank 1) indices of every value.
    std::vector<std::vector<std::size_t>> kept(arch.size());
    std::vector<std::size_t> input_kept(arch.input_shape().front());
    std::iota(input_kept.begin(), input_kept.end(), 0);
    auto kept_of = [&](int node) -> const std::vector<std::size_t> & {
        return node == nn::kNetworkInput ? input_kept : kept[static_cast<std::size_t>(node)];
    };

    std::vector<LayerSpec> layers = arch.layers();
    for (std::size_t i = 0; i < arch.size(); ++i) {
        LayerSpec &l = layers[i];
        const int src = arch.source(i);
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
            l.in_channels = kept_of(src).size();
            for (std::size_t c = 0; c < mask.keep[i].size(); ++c) {
                if (mask.keep[i][c]) kept[i].push_back(c);
            }
            l.out_channels = kept[i].size();
            break;
        case LayerKind::flatten: {
            const nn::Shape &in = arch.value_shape(src);
            if (in.size() == 3) {
                const std::size_t hw = in[1] * in[2];
                for (std::size_t c : kept_of(src)) {
                    for (std::size_t j = 0; j < hw; ++j) kept[i].push_back(c * hw + j);
                }
            } else {
                kept[i] = kept_of(src);
            }
            break;
        }
        default:
            kept[i] = kept_of(src);
            break;
        }
    }

    nn::BasicNetwork<T> out(Architecture(arch.input_shape(), std::move(layers)));
    for (std::size_t i = 0; i < arch.size(); ++i) {
        if (!arch.layer(i).has_params()) continue;
        const auto &in_idx = kept_of(arch.source(i));
        const auto &out_idx = kept[i];
        const nn::Tensor<T> &w = net.weight(i);
        nn::Tensor<T> &nw = out.weight(i);
        const std::size_t old_in = w.dim(1);
        const std::size_t spatial = w.size() / (w.dim(0) * old_in);
        for (std::size_t o = 0; o < out_idx.size(); ++o) {
            for (std::size_t c = 0; c < in_idx.size(); ++c) {
                const T *from = w.data() + (out_idx[o] * old_in + in_idx[c]) * spatial;
                std::copy(from, from + spatial, nw.data() + (o * in_idx.size() + c) * spatial);
            }
        }
        if (const nn::Tensor<T> *b = net.bias(i)) {
            nn::Tensor<T> &nb = *out.bias(i);
            for (std::size_t o = 0; o < out_idx.size(); ++o) nb[o] = (*b)[out_idx[o]];
        }
    }
    return out;
}

void to_json(nlohmann::json &j, const PruningPlan &plan) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto &l : plan.layers) layers.push_back({{"layer", l.layer}, {"kept", l.kept}, {"total", l.total}});
    j = {{"client_id", plan.client_id},
         {"client_flops", plan.client_flops},
         {"f_lambda", plan.f_lambda},
         {"ratio", plan.ratio},
         {"layers", std::move(layers)},
         {"params_before", plan.params_before},
         {"params_after", plan.params_after},
         {"flops_before", plan.flops_before},
         {"flops_after", plan.flops_after}};
}

namespace {

PrunedClientModel prune_for(const HardwareProfile &client, double f_lambda, double ratio, const Network &base) {
    PrunedClientModel out{{}, ratio > 0.0 ? apply_speedup(base, l1_mask(base, ratio)) : base};
    PruningPlan &plan = out.plan;
    plan.client_id = client.client_id;
    plan.client_flops = client.flops;
    plan.f_lambda = f_lambda;
    plan.ratio = ratio;
    const Architecture &before = base.architecture(), &after = out.model.architecture();
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (before.layer(i).has_params()) {
            plan.layers.push_back({i, after.layer(i).out_channels, before.layer(i).out_channels});
        }
    }
    plan.params_before = nn::count_params(before);
    plan.params_after = nn::count_params(after);
    plan.flops_before = nn::count_flops(before);
    plan.flops_after = nn::count_flops(after);
    return out;
}

} // namespace

std::vector<PrunedClientModel> plan_pruning(std::span<const HardwareProfile> clients, double f_lambda,
                                            const Network &base) {
    if (clients.empty()) throw std::invalid_argument("plan_pruning needs at least one client");
    std::vector<PrunedClientModel> out;
    out.reserve(clients.size());
    for (const auto &c : clients) out.push_back(prune_for(c, f_lambda, variable_pruning_ratio(c.flops, f_lambda), base));
    return out;
}

std::vector<PrunedClientModel> plan_uniform_pruning(std::span<const HardwareProfile> clients, double f_lambda,
                                                    double ratio, const Network &base) {
    if (clients.empty()) throw std::invalid_argument("plan_uniform_pruning needs at least one client");
    keep_count(ratio, 1); // range check
    std::vector<PrunedClientModel> out;
    out.reserve(clients.size());
    for (const auto &c : clients) out.push_back(prune_for(c, f_lambda, ratio, base));
    return out;
}

double expected_param_count(double params, double ratio) { return params * (1.0 - ratio); }

double expected_flops(double flops, double ratio) { return flops * (1.0 - ratio); }

template std::vector<double> channel_l1_scores<float>(const nn::Tensor<float> &);
template std::vector<double> channel_l1_scores<double>(const nn::Tensor<double> &);
template LayerScores l1_scores<float>(const nn::BasicNetwork<float> &);
template LayerScores l1_scores<double>(const nn::BasicNetwork<double> &);
template nn::BasicNetwork<float> apply_speedup<float>(const nn::BasicNetwork<float> &, const ChannelMask &);
template nn::BasicNetwork<double> apply_speedup<double>(const nn::BasicNetwork<double> &, const ChannelMask &);

} // namespace reft::pruning
