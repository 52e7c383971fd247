// SPDX-License-Identifier: Apache-2.0
#include "reft/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

namespace reft::data {

void LabeledDataset::validate() const {
    const std::size_t rows = samples.rank() == 0 ? 0 : samples.dim(0);
    if (rows != labels.size()) {
        throw DataFormatError("dataset has " + std::to_string(rows) + " samples but " + std::to_string(labels.size()) +
                              " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw DataFormatError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

Tensor<float> gather_rows(const Tensor<float> &batch, std::span<const std::size_t> rows) {
    Shape shape = batch.shape();
    const std::size_t per = batch.size() / std::max<std::size_t>(shape.at(0), 1);
    shape[0] = rows.size();
    Tensor<float> out(shape);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const float *from = batch.data() + rows[r] * per;
        std::copy(from, from + per, out.data() + r * per);
    }
    return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.samples = gather_rows(samples, indices);
    out.num_classes = num_classes;
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels.at(i));
    return out;
}

std::vector<std::size_t> class_counts(const LabeledDataset &ds) {
    std::vector<std::size_t> counts(ds.num_classes, 0);
    for (int l : ds.labels) ++counts.at(static_cast<std::size_t>(l));
    return counts;
}

std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const LabeledDataset &ds,
                                                                  const PartitionSpec &spec) {
    if (spec.clients == 0) throw PartitionError("partition needs at least one client");
    if (!(spec.alpha > 0.0)) throw PartitionError("Dirichlet alpha must be positive");
    if (ds.size() == 0) throw PartitionError("cannot partition an empty dataset");

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(static_cast<std::size_t>(ds.labels[i])).push_back(i);

    std::mt19937_64 rng(spec.seed);
    std::gamma_distribution<double> gamma(spec.alpha, 1.0);
    std::vector<double> props(spec.clients);

    for (std::size_t attempt = 0; attempt <= spec.max_retries; ++attempt) {
        std::vector<std::vector<std::size_t>> shards(spec.clients);
        for (auto idx : by_class) {
            std::shuffle(idx.begin(), idx.end(), rng);
            double total = 0.0;
            for (auto &p : props) total += (p = gamma(rng));
            if (!(total > 0.0)) {
                // Every draw underflowed (tiny alpha): the whole class goes to one client.
                std::fill(props.begin(), props.end(), 0.0);
                props[std::uniform_int_distribution<std::size_t>(0, spec.clients - 1)(rng)] = 1.0;
                total = 1.0;
            }
            double cumulative = 0.0;
            std::size_t start = 0;
            for (std::size_t c = 0; c < spec.clients; ++c) {
                cumulative += props[c] / total;
                const std::size_t end = c + 1 == spec.clients
                                            ? idx.size()
                                            : std::min(idx.size(), static_cast<std::size_t>(std::llround(
                                                                       cumulative * static_cast<double>(idx.size()))));
                for (std::size_t k = start; k < std::max(start, end); ++k) shards[c].push_back(idx[k]);
                start = std::max(start, end);
            }
        }
        const bool ok = std::all_of(shards.begin(), shards.end(),
                                    [&](const auto &s) { return s.size() >= spec.min_shard; });
        if (ok) {
            for (auto &s : shards) std::sort(s.begin(), s.end());
            return shards;
        }
    }
    throw PartitionError("could not give every one of " + std::to_string(spec.clients) + " clients at least " +
                         std::to_string(spec.min_shard) + " samples after " + std::to_string(spec.max_retries) +
                         " redraws; use a larger alpha or fewer clients");
}

std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset &ds, const PartitionSpec &spec) {
    std::vector<LabeledDataset> out;
    for (const auto &idx : dirichlet_partition_indices(ds, spec)) out.push_back(ds.subset(idx));
    return out;
}

double mean_max_class_share(const std::vector<std::vector<std::size_t>> &counts) {
    if (counts.empty()) return 0.0;
    const std::size_t classes = counts.front().size();
    double acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t t = 0; t < classes; ++t) {
        std::size_t total = 0, best = 0;
        for (const auto &c : counts) {
            total += c.at(t);
            best = std::max(best, c.at(t));
        }
        if (total == 0) continue;
        acc += static_cast<double>(best) / static_cast<double>(total);
        ++seen;
    }
    return seen ? acc / static_cast<double>(seen) : 0.0;
}

LabeledDataset synth_dataset(const SynthSpec &spec) {
    if (spec.separation < 0.0) throw DataFormatError("separation must be non-negative");
    if (spec.classes == 0 || spec.modes_per_class == 0) throw DataFormatError("need at least one class and mode");
    const std::size_t dim = nn::shape_size(spec.sample_shape);

    std::mt19937_64 domain_rng(spec.domain_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> centroids(spec.classes * spec.modes_per_class, std::vector<double>(dim));
    for (auto &c : centroids) {
        double norm = 0.0;
        for (auto &v : c) {
            v = normal(domain_rng);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto &v : c) v = v / norm * spec.separation;
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> mode(0, spec.modes_per_class - 1);
    LabeledDataset ds;
    ds.num_classes = spec.classes;
    Shape shape{spec.classes * spec.per_class};
    shape.insert(shape.end(), spec.sample_shape.begin(), spec.sample_shape.end());
    ds.samples = Tensor<float>(shape);
    ds.labels.reserve(shape[0]);
    float *out = ds.samples.data();
    // Interleave classes so any prefix is roughly balanced.
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        for (std::size_t t = 0; t < spec.classes; ++t) {
            const auto &c = centroids[t * spec.modes_per_class + mode(rng)];
            for (std::size_t d = 0; d < dim; ++d) *out++ = static_cast<float>(c[d] + normal(rng));
            ds.labels.push_back(static_cast<int>(t));
        }
    }
    return ds;
}

LabeledDataset synth_dataset(std::size_t classes, std::size_t per_class, const Shape &sample_shape, double separation,
                             std::uint64_t seed) {
    return synth_dataset(SynthSpec{classes, per_class, sample_shape, separation, seed, seed, 1});
}

LabeledDataset load_raw(const std::filesystem::path &path, const RawFormat &format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t rec = format.record_size();
    const std::size_t pixels = rec - 1;
    if (!format.mean.empty() && (format.mean.size() != format.channels || format.stddev.size() != format.channels)) {
        throw DataFormatError("normalization needs one mean and one stddev per channel");
    }
    if (bytes.size() % rec != 0) {
        throw DataFormatError(path.string() + ": truncated record at byte offset " +
                              std::to_string(bytes.size() - bytes.size() % rec) + " (record size " +
                              std::to_string(rec) + ")");
    }
    const std::size_t n = bytes.size() / rec;
    LabeledDataset ds;
    ds.num_classes = format.classes;
    ds.samples = Tensor<float>({n, format.channels, format.height, format.width});
    ds.labels.resize(n);
    const std::size_t plane = format.height * format.width;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t offset = r * rec;
        if (bytes[offset] >= format.classes) {
            throw DataFormatError(path.string() + ": label " + std::to_string(bytes[offset]) + " at byte offset " +
                                  std::to_string(offset) + " is not below " + std::to_string(format.classes));
        }
        ds.labels[r] = bytes[offset];
        float *dst = ds.samples.data() + r * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            float v = static_cast<float>(bytes[offset + 1 + p]) / 255.0f;
            if (!format.mean.empty()) {
                const std::size_t ch = p / plane;
                v = (v - format.mean[ch]) / format.stddev[ch];
            }
            dst[p] = v;
        }
    }
    return ds;
}

void save_raw(const LabeledDataset &ds, const std::filesystem::path &path) {
    ds.validate();
    if (ds.num_classes > 256) throw DataFormatError("raw format stores labels in one byte");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError("cannot open " + path.string() + " for writing");
    const std::size_t per = ds.size() ? ds.samples.size() / ds.size() : 0;
    std::vector<char> rec(1 + per);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        rec[0] = static_cast<char>(ds.labels[r]);
        const float *src = ds.samples.data() + r * per;
        for (std::size_t p = 0; p < per; ++p) {
            const float v = std::clamp(src[p], 0.0f, 1.0f);
            rec[1 + p] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
        }
        out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw DataFormatError("failed writing " + path.string());
}

} // namespace reft::data
