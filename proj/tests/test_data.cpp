// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "reft/data/dataset.hpp"

using namespace reft;
using namespace reft::data;

namespace {

std::filesystem::path temp_file(const std::string &name) {
    return std::filesystem::temp_directory_path() / ("reft_test_" + name);
}

LabeledDataset balanced(std::size_t classes, std::size_t per_class) {
    return synth_dataset(classes, per_class, {1, 2, 2}, 1.0, 3);
}

} // namespace

TEST_CASE("class counts") {
    LabeledDataset empty;
    empty.num_classes = 3;
    CHECK(class_counts(empty) == std::vector<std::size_t>{0, 0, 0});

    LabeledDataset ds;
    ds.num_classes = 4;
    ds.labels = {0, 0, 1};
    ds.samples = Tensor<float>({3, 1});
    CHECK(class_counts(ds) == std::vector<std::size_t>{2, 1, 0, 0});
}

TEST_CASE("dirichlet partition with one client returns the whole dataset") {
    const auto ds = balanced(3, 20);
    const auto shards = dirichlet_partition(ds, {1, 0.5, 7, 0});
    REQUIRE(shards.size() == 1);
    CHECK(shards[0].labels == ds.labels);
    CHECK(shards[0].samples == ds.samples);
}

TEST_CASE("huge alpha gives near-uniform per-class shares") {
    const auto ds = balanced(4, 10000);
    const auto shards = dirichlet_partition(ds, {4, 1e6, 1, 0});
    for (const auto &s : shards) {
        const auto counts = class_counts(s);
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(static_cast<double>(counts[t]) / 10000.0 == doctest::Approx(0.25).epsilon(0.05));
        }
    }
}

TEST_CASE("dirichlet partition is a disjoint cover (index multiset oracle)") {
    const auto ds = balanced(5, 60);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto idx = dirichlet_partition_indices(ds, {6, 1.0, seed, 0});
        std::vector<int> seen(ds.size(), 0);
        std::size_t total = 0;
        for (const auto &shard : idx) {
            total += shard.size();
            CHECK(std::is_sorted(shard.begin(), shard.end()));
            for (auto i : shard) ++seen.at(i);
        }
        CHECK(total == ds.size());
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));

        // Per-class coverage: summed shard histograms equal the parent's.
        const auto shards = dirichlet_partition(ds, {6, 1.0, seed, 0});
        std::vector<std::size_t> sum(5, 0);
        for (const auto &s : shards) {
            const auto c = class_counts(s);
            CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == s.size());
            for (std::size_t t = 0; t < 5; ++t) sum[t] += c[t];
        }
        CHECK(sum == class_counts(ds));
    }
}

TEST_CASE("dirichlet partition is deterministic per seed") {
    const auto ds = balanced(3, 50);
    CHECK(dirichlet_partition_indices(ds, {4, 0.5, 11, 0}) == dirichlet_partition_indices(ds, {4, 0.5, 11, 0}));
    CHECK(dirichlet_partition_indices(ds, {4, 0.5, 11, 0}) != dirichlet_partition_indices(ds, {4, 0.5, 12, 0}));
}

TEST_CASE("minimum shard size is enforced or reported") {
    const auto ds = balanced(4, 25);
    const auto shards = dirichlet_partition_indices(ds, {4, 1.0, 2, 15});
    for (const auto &s : shards) CHECK(s.size() >= 15);
    CHECK_THROWS_AS(dirichlet_partition_indices(ds, {4, 0.01, 2, 30, 20}), PartitionError);
    CHECK_THROWS_AS(dirichlet_partition_indices(ds, {0, 1.0, 2, 0}), PartitionError);
    CHECK_THROWS_AS(dirichlet_partition_indices(ds, {2, 0.0, 2, 0}), PartitionError);
}

TEST_CASE("smaller alpha means more skew") {
    const auto ds = balanced(10, 100);
    auto statistic = [&](double alpha) {
        double acc = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            std::vector<std::vector<std::size_t>> counts;
            for (const auto &s : dirichlet_partition(ds, {5, alpha, seed, 0})) counts.push_back(class_counts(s));
            acc += mean_max_class_share(counts);
        }
        return acc / 50.0;
    };
    CHECK(statistic(0.1) > statistic(100.0));
}

TEST_CASE("mean max class share") {
    CHECK(mean_max_class_share({{10, 0}, {0, 5}}) == 1.0);
    CHECK(mean_max_class_share({{5, 3}, {5, 1}}) == doctest::Approx((0.5 + 0.75) / 2));
    CHECK(mean_max_class_share({{1, 0}, {1, 0}}) == 0.5); // empty class skipped
}

TEST_CASE("synthetic data") {
    SUBCASE("same seed is bit-identical") {
        const auto a = synth_dataset(3, 10, {2, 3, 3}, 2.0, 5);
        const auto b = synth_dataset(3, 10, {2, 3, 3}, 2.0, 5);
        CHECK(a.samples == b.samples);
        CHECK(a.labels == b.labels);
        CHECK(a.size() == 30);
        CHECK(a.sample_shape() == Shape{2, 3, 3});
    }
    SUBCASE("zero separation makes classes indistinguishable") {
        SynthSpec spec{2, 4000, {4}, 0.0, 1, 1, 1};
        const auto ds = synth_dataset(spec);
        std::vector<double> mean(8, 0.0);
        for (std::size_t i = 0; i < ds.size(); ++i)
            for (std::size_t d = 0; d < 4; ++d) mean[ds.labels[i] * 4 + d] += ds.samples[i * 4 + d] / 4000.0;
        for (std::size_t d = 0; d < 4; ++d) CHECK(std::abs(mean[d] - mean[4 + d]) < 0.1);
    }
    SUBCASE("large separation: nearest-centroid oracle is >= 99% accurate") {
        const auto train = synth_dataset(SynthSpec{4, 200, {1, 4, 4}, 12.0, 1, 9, 1});
        const auto test = synth_dataset(SynthSpec{4, 200, {1, 4, 4}, 12.0, 2, 9, 1});
        std::vector<std::vector<double>> centroid(4, std::vector<double>(16, 0.0));
        for (std::size_t i = 0; i < train.size(); ++i)
            for (std::size_t d = 0; d < 16; ++d) centroid[train.labels[i]][d] += train.samples[i * 16 + d] / 200.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            std::size_t best = 0;
            double best_d = 1e300;
            for (std::size_t t = 0; t < 4; ++t) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < 16; ++d) d2 += std::pow(test.samples[i * 16 + d] - centroid[t][d], 2);
                if (d2 < best_d) best_d = d2, best = t;
            }
            correct += static_cast<int>(best) == test.labels[i];
        }
        CHECK(static_cast<double>(correct) / test.size() >= 0.99);
    }
    SUBCASE("negative separation is rejected") {
        CHECK_THROWS_AS(synth_dataset(2, 2, {1}, -1.0, 0), DataFormatError);
    }
}

TEST_CASE("public dataset carries samples only") {
    const auto ds = balanced(2, 5);
    const auto pub = PublicDataset::strip_labels(ds);
    CHECK(pub.size() == 10);
    CHECK(pub.samples() == ds.samples);
    CHECK(pub.sample_shape() == Shape{1, 2, 2});
}

TEST_CASE("raw record loading") {
    const RawFormat fmt{3, 2, 2, 10, {}, {}};
    SUBCASE("one record of white pixels") {
        const auto path = temp_file("white.bin");
        {
            std::ofstream out(path, std::ios::binary);
            std::vector<char> rec(fmt.record_size(), static_cast<char>(255));
            rec[0] = 3;
            out.write(rec.data(), rec.size());
        }
        const auto ds = load_raw(path, fmt);
        REQUIRE(ds.size() == 1);
        CHECK(ds.labels[0] == 3);
        for (float v : ds.samples.values()) CHECK(v == 1.0f);
    }
    SUBCASE("empty file is an empty dataset") {
        const auto path = temp_file("empty.bin");
        std::ofstream(path, std::ios::binary).close();
        CHECK(load_raw(path, fmt).size() == 0);
    }
    SUBCASE("truncated file reports the byte offset") {
        const auto path = temp_file("trunc.bin");
        {
            std::ofstream out(path, std::ios::binary);
            std::vector<char> rec(fmt.record_size() + 5, 0);
            out.write(rec.data(), rec.size());
        }
        try {
            load_raw(path, fmt);
            FAIL("expected an error");
        } catch (const DataFormatError &e) {
            CHECK(std::string(e.what()).find("byte offset 13") != std::string::npos);
        }
    }
    SUBCASE("label out of range reports the byte offset") {
        const auto path = temp_file("badlabel.bin");
        {
            std::ofstream out(path, std::ios::binary);
            std::vector<char> rec(2 * fmt.record_size(), 0);
            rec[fmt.record_size()] = 12;
            out.write(rec.data(), rec.size());
        }
        try {
            load_raw(path, fmt);
            FAIL("expected an error");
        } catch (const DataFormatError &e) {
            CHECK(std::string(e.what()).find("byte offset 13") != std::string::npos);
        }
    }
    SUBCASE("write then load is lossless up to byte quantization") {
        auto ds = synth_dataset(SynthSpec{10, 6, {3, 2, 2}, 0.5, 4, 4, 1});
        for (auto &v : ds.samples.values()) v = 0.5f + 0.3f * v;
        const auto path = temp_file("roundtrip.bin");
        save_raw(ds, path);
        const auto back = load_raw(path, fmt);
        CHECK(back.labels == ds.labels);
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            const float expected = std::clamp(ds.samples[i], 0.0f, 1.0f);
            CHECK(std::abs(back.samples[i] - expected) <= 0.5f / 255.0f + 1e-6f);
        }
    }
    SUBCASE("per-channel normalization") {
        const auto path = temp_file("norm.bin");
        {
            std::ofstream out(path, std::ios::binary);
            std::vector<char> rec(fmt.record_size(), static_cast<char>(255));
            rec[0] = 0;
            out.write(rec.data(), rec.size());
        }
        const RawFormat norm{3, 2, 2, 10, {0.5f, 0.5f, 0.0f}, {0.5f, 0.25f, 1.0f}};
        const auto ds = load_raw(path, norm);
        CHECK(ds.samples[0] == doctest::Approx(1.0));
        CHECK(ds.samples[4] == doctest::Approx(2.0));
        CHECK(ds.samples[8] == doctest::Approx(1.0));
    }
}
