// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "reft/nn/tensor.hpp"

namespace reft::data {

using nn::Shape;
using nn::Tensor;

struct LabeledDataset {
    Tensor<float> samples; // N followed by the per-sample shape
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return Shape(samples.shape().begin() + 1, samples.shape().end()); }

    // Throws DataFormatError when counts disagree or a label is out of range.
    void validate() const;
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// Unlabeled samples held by the server. There is no way to attach labels.
class PublicDataset {
public:
    PublicDataset() = default;
    explicit PublicDataset(Tensor<float> samples) : samples_(std::move(samples)) {}

    static PublicDataset strip_labels(const LabeledDataset &ds) { return PublicDataset(ds.samples); }

    const Tensor<float> &samples() const { return samples_; }
    std::size_t size() const { return samples_.rank() == 0 ? 0 : samples_.dim(0); }
    Shape sample_shape() const { return Shape(samples_.shape().begin() + 1, samples_.shape().end()); }

private:
    Tensor<float> samples_;
};

// Copies the listed rows of a batched tensor.
Tensor<float> gather_rows(const Tensor<float> &batch, std::span<const std::size_t> rows);

struct PartitionSpec {
    std::size_t clients = 1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    std::size_t min_shard = 0;
    std::size_t max_retries = 1000;
};

// Per-class Dirichlet split: for every class, client proportions are drawn
// from Dir(alpha, ..., alpha) and that class's (shuffled) samples are cut
// accordingly. The draw is repeated until every shard holds at least
// `min_shard` samples. Returned index lists are sorted.
std::vector<std::vector<std::size_t>> dirichlet_partition_indices(const LabeledDataset &ds,
                                                                  const PartitionSpec &spec);
std::vector<LabeledDataset> dirichlet_partition(const LabeledDataset &ds, const PartitionSpec &spec);

std::vector<std::size_t> class_counts(const LabeledDataset &ds);

// Mean over classes of the largest single-client share of that class.
// `counts[c][t]` is client c's sample count for class t. Classes without
// samples are skipped.
double mean_max_class_share(const std::vector<std::vector<std::size_t>> &counts);

// Gaussian class blobs. Each class owns `modes_per_class` centroids of norm
// `separation` in pixel space (direction drawn from `domain_seed`), and
// samples add unit-variance noise drawn from `seed`. Two sets sharing a
// domain seed come from the same distribution.
struct SynthSpec {
    std::size_t classes = 4;
    std::size_t per_class = 100;
    Shape sample_shape{1, 8, 8};
    double separation = 4.0;
    std::uint64_t seed = 0;
    std::uint64_t domain_seed = 0;
    std::size_t modes_per_class = 1;
};

LabeledDataset synth_dataset(const SynthSpec &spec);
LabeledDataset synth_dataset(std::size_t classes, std::size_t per_class, const Shape &sample_shape, double separation,
                             std::uint64_t seed);

// Fixed-size binary records: one label byte followed by C*H*W pixel bytes in
// channel-major order (CIFAR-10 binary layout when H = W = 32, C = 3).
struct RawFormat {
    std::size_t channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t classes = 10;
    // Optional per-channel normalization applied after scaling to [0, 1].
    std::vector<float> mean;
    std::vector<float> stddev;

    std::size_t record_size() const { return 1 + channels * height * width; }
};

LabeledDataset load_raw(const std::filesystem::path &path, const RawFormat &format);
// Pixels are clamped to [0, 1] and quantized to a byte.
void save_raw(const LabeledDataset &ds, const std::filesystem::path &path);

} // namespace reft::data
