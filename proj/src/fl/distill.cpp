// SPDX-License-Identifier: Apache-2.0
#include "reft/fl/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "reft/errors.hpp"

namespace reft::fl {

ImportanceWeights compute_importance_weights(const std::vector<std::vector<std::size_t>> &counts) {
    ImportanceWeights w;
    if (counts.empty()) return w;
    const std::size_t classes = counts.front().size();
    w.weight.assign(classes, std::vector<double>(counts.size(), 0.0));
    w.covered.assign(classes, false);
    for (std::size_t t = 0; t < classes; ++t) {
        std::size_t total = 0;
        for (const auto &c : counts) total += c.at(t);
        if (total == 0) continue;
        w.covered[t] = true;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            w.weight[t][c] = static_cast<double>(counts[c][t]) / static_cast<double>(total);
        }
    }
    return w;
}

LogitMatrix::LogitMatrix(std::size_t rows, std::vector<bool> coverage)
    : rows_(rows), coverage_(std::move(coverage)), values_(rows_ * coverage_.size(), 0.0f), passes_(rows_, 0) {}

std::size_t LogitMatrix::covered_count() const {
    return static_cast<std::size_t>(std::count(coverage_.begin(), coverage_.end(), true));
}

float LogitMatrix::at(std::size_t i, std::size_t t) const {
    if (!covered(t)) throw Error("class " + std::to_string(t) + " is absent from this logit matrix");
    return values_.at(i * classes() + t);
}

void LogitMatrix::set(std::size_t i, std::size_t t, float v) {
    if (!covered(t)) throw Error("class " + std::to_string(t) + " is absent from this logit matrix");
    values_.at(i * classes() + t) = v;
}

nn::Tensor<float> LogitMatrix::dense(std::span<const std::size_t> rows) const {
    const std::size_t k = classes();
    nn::Tensor<float> out({rows.size(), k});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t t = 0; t < k; ++t) {
            if (coverage_[t]) out[r * k + t] = values_[rows[r] * k + t];
        }
    }
    return out;
}

std::vector<bool> shard_coverage(const data::LabeledDataset &shard) {
    std::vector<bool> cov(shard.num_classes, false);
    for (int l : shard.labels) cov.at(static_cast<std::size_t>(l)) = true;
    return cov;
}

LogitMatrix client_logits(const nn::Network &net, const data::PublicDataset &public_set, std::vector<bool> coverage) {
    const std::size_t k = net.architecture().num_outputs();
    if (coverage.size() != k) {
        throw ShapeError("coverage has " + std::to_string(coverage.size()) + " classes, model outputs " +
                         std::to_string(k));
    }
    if (std::none_of(coverage.begin(), coverage.end(), [](bool b) { return b; })) {
        throw Error("a client must cover at least one class");
    }
    const std::size_t n = public_set.size();
    LogitMatrix out(n, std::move(coverage));
    constexpr std::size_t chunk = 256;
    std::vector<std::size_t> rows;
    for (std::size_t lo = 0; lo < n; lo += chunk) {
        const std::size_t hi = std::min(n, lo + chunk);
        rows.resize(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        const auto logits = net.predict(data::gather_rows(public_set.samples(), rows));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            ++out.passes()[lo + r];
            for (std::size_t t = 0; t < k; ++t) {
                if (!out.covered(t)) continue;
                const float v = logits[r * k + t];
                if (!std::isfinite(v)) throw DivergenceError("non-finite logit for public sample " + std::to_string(lo + r));
                out.set(lo + r, t, v);
            }
        }
    }
    return out;
}

LogitMatrix aggregate_teacher_logits(std::span<const LogitMatrix> mats, const ImportanceWeights &weights) {
    if (mats.empty()) throw Error("no client logits to aggregate");
    const std::size_t rows = mats.front().rows(), k = mats.front().classes();
    for (const auto &m : mats) {
        if (m.rows() != rows || m.classes() != k) throw ShapeError("client logit matrices disagree in shape");
    }
    if (weights.classes() != k || weights.clients() != mats.size()) {
        throw ShapeError("importance weights are " + std::to_string(weights.classes()) + " x " +
                         std::to_string(weights.clients()) + ", expected " + std::to_string(k) + " x " +
                         std::to_string(mats.size()));
    }

    std::vector<bool> coverage(k, false);
    std::vector<std::vector<double>> w(k, std::vector<double>(mats.size(), 0.0));
    for (std::size_t t = 0; t < k; ++t) {
        double sum = 0.0;
        std::size_t present = 0;
        for (std::size_t c = 0; c < mats.size(); ++c) {
            if (!mats[c].covered(t)) continue;
            sum += weights.weight[t][c];
            ++present;
        }
        if (present == 0) continue;
        coverage[t] = true;
        for (std::size_t c = 0; c < mats.size(); ++c) {
            if (!mats[c].covered(t)) continue;
            // A client claiming a class it has no samples of gets an even share.
            w[t][c] = sum > 0.0 ? weights.weight[t][c] / sum : 1.0 / static_cast<double>(present);
        }
    }
    if (std::none_of(coverage.begin(), coverage.end(), [](bool b) { return b; })) {
        throw Error("no class is covered by any client; nothing to distill");
    }

    LogitMatrix out(rows, coverage);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            if (!coverage[t]) continue;
            double acc = 0.0;
            for (std::size_t c = 0; c < mats.size(); ++c) {
                if (w[t][c] != 0.0) acc += w[t][c] * mats[c].at(i, t);
            }
            out.set(i, t, static_cast<float>(acc));
        }
    }
    return out;
}

std::string_view to_string(KdMode mode) { return mode == KdMode::kl ? "kl" : "l2"; }

KdMode kd_mode_from_string(std::string_view name) {
    if (name == "kl") return KdMode::kl;
    if (name == "l2") return KdMode::l2;
    throw ConfigError("unknown distillation loss '" + std::string(name) + "' (expected kl or l2)");
}

void DistillConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("distill.temperature must be positive");
    if (steps == 0) throw ConfigError("distill.steps must be at least 1");
    if (batch_size == 0) throw ConfigError("distill.batch_size must be at least 1");
    if (!(lr >= 0.0)) throw ConfigError("distill.lr must be non-negative");
}

template <typename T>
nn::LossResult<T> kd_loss(const nn::Tensor<T> &student, const nn::Tensor<T> &teacher, const std::vector<bool> &mask,
                          const DistillConfig &cfg) {
    if (!(cfg.temperature > 0.0)) throw Error("distillation temperature must be positive");
    if (student.shape() != teacher.shape() || student.rank() != 2 || mask.size() != student.dim(1)) {
        throw ShapeError("kd_loss: student " + nn::shape_to_string(student.shape()) + ", teacher " +
                         nn::shape_to_string(teacher.shape()) + ", mask of " + std::to_string(mask.size()));
    }
    const std::size_t n = student.dim(0), k = student.dim(1);
    const std::size_t covered = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    if (covered == 0) throw Error("kd_loss: no covered class");

    nn::LossResult<T> out;
    out.grad = nn::Tensor<T>(student.shape());
    if (n == 0) return out;

    if (cfg.mode == KdMode::l2) {
        const double denom = static_cast<double>(n * covered);
        for (std::size_t i = 0; i < n * k; ++i) {
            if (!mask[i % k]) continue;
            const double d = static_cast<double>(student[i]) - static_cast<double>(teacher[i]);
            out.loss += d * d / denom;
            out.grad[i] = static_cast<T>(2.0 * d / denom);
        }
        return out;
    }

    const double tau = cfg.temperature;
    std::vector<double> p(k), q(k);
    auto softmax = [&](const T *z, std::vector<double> &dst) {
        double m = -INFINITY;
        for (std::size_t t = 0; t < k; ++t)
            if (mask[t]) m = std::max(m, static_cast<double>(z[t]) / tau);
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            dst[t] = mask[t] ? std::exp(static_cast<double>(z[t]) / tau - m) : 0.0;
            s += dst[t];
        }
        for (auto &v : dst) v /= s;
    };
    for (std::size_t i = 0; i < n; ++i) {
        softmax(teacher.data() + i * k, p);
        softmax(student.data() + i * k, q);
        double kl = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            if (!mask[t]) continue;
            if (p[t] > 0.0) kl += p[t] * (std::log(p[t]) - std::log(std::max(q[t], 1e-300)));
            // d(tau^2 KL)/dz = tau (q - p)
            out.grad[i * k + t] = static_cast<T>(tau * (q[t] - p[t]) / static_cast<double>(n));
        }
        out.loss += tau * tau * kl / static_cast<double>(n);
    }
    return out;
}

template nn::LossResult<float> kd_loss<float>(const nn::Tensor<float> &, const nn::Tensor<float> &,
                                              const std::vector<bool> &, const DistillConfig &);
template nn::LossResult<double> kd_loss<double>(const nn::Tensor<double> &, const nn::Tensor<double> &,
                                                const std::vector<bool> &, const DistillConfig &);

double distill_loss(const nn::Network &net, const data::PublicDataset &public_set, const LogitMatrix &teacher,
                    const DistillConfig &cfg) {
    const std::size_t n = public_set.size();
    if (n == 0) return 0.0;
    double sum = 0.0;
    std::vector<std::size_t> rows;
    for (std::size_t lo = 0; lo < n; lo += 256) {
        const std::size_t hi = std::min(n, lo + 256);
        rows.resize(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        const auto student = net.predict(data::gather_rows(public_set.samples(), rows));
        sum += kd_loss(student, teacher.dense(rows), teacher.coverage(), cfg).loss * static_cast<double>(rows.size());
    }
    return sum / static_cast<double>(n);
}

DistillResult distill(ServerState &server, const LogitMatrix &teacher) {
    const auto &cfg = server.config;
    cfg.validate();
    const std::size_t n = server.public_set.size();
    if (teacher.rows() != n) {
        throw ShapeError("teacher has " + std::to_string(teacher.rows()) + " rows, public set " + std::to_string(n));
    }
    if (teacher.covered_count() == 0) throw Error("teacher covers no class");
    if (teacher.classes() != server.global.architecture().num_outputs()) {
        throw ShapeError("teacher has " + std::to_string(teacher.classes()) + " classes, global model outputs " +
                         std::to_string(server.global.architecture().num_outputs()));
    }

    DistillResult result;
    result.initial_loss = distill_loss(server.global, server.public_set, teacher, cfg);
    const std::size_t batch = std::min(cfg.batch_size, n);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n; // forces a shuffle on the first step
    nn::OptimizerState<float> state;
    std::vector<std::size_t> rows(batch);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (auto &r : rows) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            r = order[cursor++];
        }
        const auto student = server.global.forward(data::gather_rows(server.public_set.samples(), rows));
        const auto loss = kd_loss(student, teacher.dense(rows), teacher.coverage(), cfg);
        if (!std::isfinite(loss.loss)) {
            std::ostringstream msg;
            msg << "distillation loss became " << loss.loss << " at step " << step << " (lr " << cfg.lr << ")";
            throw DivergenceError(msg.str());
        }
        const auto grads = server.global.backward(loss.grad);
        if (cfg.optimizer == nn::OptimizerKind::adam) {
            nn::adam_step(server.global.parameters(), grads, state, cfg.lr);
        } else {
            nn::sgd_momentum_step(server.global.parameters(), grads, state, cfg.lr, 0.9, 0.0);
        }
        result.step_loss.push_back(loss.loss);
    }
    result.final_loss = distill_loss(server.global, server.public_set, teacher, cfg);
    return result;
}

} // namespace reft::fl
