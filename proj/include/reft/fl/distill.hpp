// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "reft/data/dataset.hpp"
#include "reft/nn/loss.hpp"
#include "reft/nn/network.hpp"
#include "reft/nn/optim.hpp"
#include "reft/resources/resources.hpp"

namespace reft::fl {

// I[t][c]: client c's share of all samples of class t.
struct ImportanceWeights {
    std::vector<std::vector<double>> weight; // [class][client]
    std::vector<bool> covered;               // class has at least one sample somewhere

    std::size_t classes() const { return weight.size(); }
    std::size_t clients() const { return weight.empty() ? 0 : weight.front().size(); }
};

// counts[c][t] is client c's sample count for class t (the layout of
// data::class_counts per client). Uncovered classes get all-zero rows.
ImportanceWeights compute_importance_weights(const std::vector<std::vector<std::size_t>> &counts);

// Per-sample, per-class logits on the public set. Classes outside the
// coverage set are absent: they hold no value and cannot be read.
class LogitMatrix {
public:
    LogitMatrix() = default;
    LogitMatrix(std::size_t rows, std::vector<bool> coverage);

    std::size_t rows() const { return rows_; }
    std::size_t classes() const { return coverage_.size(); }
    const std::vector<bool> &coverage() const { return coverage_; }
    bool covered(std::size_t t) const { return coverage_.at(t); }
    std::size_t covered_count() const;

    // Throws Error when class t is absent.
    float at(std::size_t i, std::size_t t) const;
    void set(std::size_t i, std::size_t t, float v);

    // Number of values a client would upload: rows x covered classes.
    std::uint64_t payload_size() const { return rows_ * covered_count(); }

    // Dense rows x classes copy; absent entries are 0 and must be masked out.
    nn::Tensor<float> dense(std::span<const std::size_t> rows) const;

    // Forward passes spent per public sample while producing this matrix.
    const std::vector<std::uint32_t> &passes() const { return passes_; }
    std::vector<std::uint32_t> &passes() { return passes_; }

private:
    std::size_t rows_ = 0;
    std::vector<bool> coverage_;
    std::vector<float> values_;
    std::vector<std::uint32_t> passes_;
};

// Scores every public sample exactly once with `net`.
LogitMatrix client_logits(const nn::Network &net, const data::PublicDataset &public_set, std::vector<bool> coverage);

// Coverage of a labeled shard: classes with at least one sample.
std::vector<bool> shard_coverage(const data::LabeledDataset &shard);

// z_hat[i][t] = sum over clients covering t of I[t][c] z_c[i][t], with the
// weights renormalized over those clients. Classes covered by nobody stay
// absent. Throws Error when no class is covered at all.
LogitMatrix aggregate_teacher_logits(std::span<const LogitMatrix> mats, const ImportanceWeights &weights);

enum class KdMode { kl, l2 };
std::string_view to_string(KdMode mode);
KdMode kd_mode_from_string(std::string_view name);

struct DistillConfig {
    double temperature = 4.0;
    KdMode mode = KdMode::kl;
    std::size_t steps = 200;
    std::size_t batch_size = 512;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    // Throws ConfigError unless temperature > 0, steps >= 1, batch_size >= 1, lr >= 0.
    void validate() const;

    bool operator==(const DistillConfig &) const = default;
};

// Student vs teacher over the classes flagged in `mask`; other columns get
// zero gradient.
//   kl: tau^2 * mean_i KL(softmax(teacher/tau) || softmax(student/tau))
//   l2: mean over (sample, covered class) of (student - teacher)^2
// Throws Error on tau <= 0 or a shape mismatch.
template <typename T>
nn::LossResult<T> kd_loss(const nn::Tensor<T> &student, const nn::Tensor<T> &teacher, const std::vector<bool> &mask,
                          const DistillConfig &cfg);

// Server side: global model and unlabeled public data only. There is no
// member or constructor that accepts a LabeledDataset.
struct ServerState {
    nn::Network global;
    data::PublicDataset public_set;
    DistillConfig config;
    resources::BandwidthLedger *ledger = nullptr;
};

struct DistillResult {
    double initial_loss = 0.0; // over the whole public set
    double final_loss = 0.0;
    std::vector<double> step_loss;
};

// cfg.steps optimizer steps on minibatches of the public set against the
// fixed teacher logits. Updates server.global in place.
DistillResult distill(ServerState &server, const LogitMatrix &teacher);

// Loss of `net` against the teacher over the whole public set.
double distill_loss(const nn::Network &net, const data::PublicDataset &public_set, const LogitMatrix &teacher,
                    const DistillConfig &cfg);

extern template nn::LossResult<float> kd_loss<float>(const nn::Tensor<float> &, const nn::Tensor<float> &,
                                                     const std::vector<bool> &, const DistillConfig &);
extern template nn::LossResult<double> kd_loss<double>(const nn::Tensor<double> &, const nn::Tensor<double> &,
                                                       const std::vector<bool> &, const DistillConfig &);

} // namespace reft::fl
