// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <type_traits>

#include "reft/errors.hpp"
#include "reft/fl/client.hpp"
#include "reft/fl/distill.hpp"
#include "reft/fl/experiment.hpp"
#include "reft/fl/fedavg.hpp"
#include "reft/nn/loss.hpp"
#include "reft/nn/models.hpp"
#include "support/random_nets.hpp"
#include "support/small_experiment.hpp"

using namespace reft;
using namespace reft::fl;
using nn::LayerSpec;

namespace {

nn::Network tiny_mlp(std::size_t in, std::size_t classes, std::uint64_t seed) {
    nn::Network net(nn::Architecture({in}, {LayerSpec::dense(in, 8), LayerSpec::relu(), LayerSpec::dense(8, classes)}));
    net.init_kaiming_uniform(seed);
    return net;
}

ClientState blob_client(std::uint64_t seed) {
    ClientState c;
    c.id = 3;
    c.train = data::synth_dataset(2, 40, {4}, 8.0, seed);
    c.model = tiny_mlp(4, 2, seed);
    c.train_config.schedule = nn::ScheduleKind::constant;
    c.train_config.lr_max = 0.05;
    c.train_config.epochs = 50;
    c.rng_seed = client_seed(seed, c.id);
    return c;
}

// Classic perceptron with bias; returns true once an epoch makes no mistake.
bool perceptron_separable(const data::LabeledDataset &ds, std::size_t max_epochs) {
    const std::size_t d = ds.samples.size() / ds.size();
    std::vector<double> w(d + 1, 0.0);
    for (std::size_t e = 0; e < max_epochs; ++e) {
        bool clean = true;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double y = ds.labels[i] == 1 ? 1.0 : -1.0;
            double s = w[d];
            for (std::size_t k = 0; k < d; ++k) s += w[k] * ds.samples[i * d + k];
            if (y * s <= 0.0) {
                clean = false;
                for (std::size_t k = 0; k < d; ++k) w[k] += y * ds.samples[i * d + k];
                w[d] += y;
            }
        }
        if (clean) return true;
    }
    return false;
}

data::PublicDataset public_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
    return data::PublicDataset::strip_labels(data::synth_dataset(1, n, {dim}, 1.0, seed));
}

double cosine(const std::vector<double> &a, const std::vector<double> &b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
    return ab / std::sqrt(aa * bb);
}

} // namespace

TEST_CASE("client seeds are distinct per client and per run") {
    CHECK(client_seed(1, 0) != client_seed(1, 1));
    CHECK(client_seed(1, 0) != client_seed(2, 0));
    CHECK(client_seed(7, 4) == client_seed(7, 4));
}

TEST_CASE("local training") {
    SUBCASE("zero epochs leave the weights unchanged") {
        auto c = blob_client(1);
        c.train_config.epochs = 0;
        const auto before = c.model.parameters();
        local_train(c);
        CHECK(c.model.parameters() == before);
    }
    SUBCASE("separable blobs are fit perfectly") {
        auto c = blob_client(2);
        REQUIRE(perceptron_separable(c.train, 1000));
        const auto r = local_train(c);
        CHECK(r.epoch_loss.size() == 50);
        CHECK(accuracy(c.model, c.train) == 1.0);
    }
    SUBCASE("same seed twice is bit-identical") {
        auto a = blob_client(5), b = blob_client(5);
        a.train_config.epochs = b.train_config.epochs = 3;
        local_train(a);
        local_train(b);
        CHECK(a.model.parameters() == b.model.parameters());
    }
    SUBCASE("non-finite loss aborts with lr and step") {
        auto c = blob_client(3);
        (*c.model.bias(2))[0] = NAN;
        try {
            local_train(c);
            FAIL("expected divergence");
        } catch (const DivergenceError &e) {
            const std::string msg = e.what();
            CHECK(msg.find("step 0") != std::string::npos);
            CHECK(msg.find("lr 0.05") != std::string::npos);
        }
    }
}

TEST_CASE("importance weights") {
    SUBCASE("one client gets weight 1 wherever it has samples") {
        const auto w = compute_importance_weights({{3, 0, 5}});
        CHECK(w.weight[0][0] == 1.0);
        CHECK(w.weight[2][0] == 1.0);
        CHECK_FALSE(w.covered[1]);
        CHECK(w.weight[1][0] == 0.0);
    }
    SUBCASE("30 vs 10") {
        const auto w = compute_importance_weights({{30}, {10}});
        CHECK(w.weight[0][0] == 0.75);
        CHECK(w.weight[0][1] == 0.25);
    }
    SUBCASE("random counts match brute-force normalization and are scale invariant") {
        std::mt19937_64 rng(11);
        std::uniform_int_distribution<std::size_t> count(0, 50);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<std::vector<std::size_t>> counts(4, std::vector<std::size_t>(6));
            for (auto &row : counts)
                for (auto &v : row) v = count(rng) < 10 ? 0 : count(rng);
            auto scaled = counts;
            for (auto &row : scaled)
                for (auto &v : row) v *= 7;
            const auto w = compute_importance_weights(counts);
            const auto ws = compute_importance_weights(scaled);
            for (std::size_t t = 0; t < 6; ++t) {
                double total = 0;
                for (const auto &row : counts) total += static_cast<double>(row[t]);
                double sum = 0;
                for (std::size_t c = 0; c < 4; ++c) {
                    const double expected = total > 0 ? counts[c][t] / total : 0.0;
                    CHECK(std::abs(w.weight[t][c] - expected) <= 1e-12);
                    CHECK(std::abs(ws.weight[t][c] - w.weight[t][c]) <= 1e-12);
                    sum += w.weight[t][c];
                }
                if (total > 0) CHECK(std::abs(sum - 1.0) <= 1e-9);
                CHECK(w.covered[t] == (total > 0));
            }
        }
    }
}

TEST_CASE("client logits") {
    const auto net = tiny_mlp(5, 3, 4);
    const auto pub = public_rows(10, 5, 9);
    SUBCASE("match forward row by row, one pass per sample") {
        const auto m = client_logits(net, pub, {true, false, true});
        CHECK(m.payload_size() == 20);
        for (std::size_t i = 0; i < 10; ++i) {
            const std::size_t row[] = {i};
            const auto ref = net.predict(data::gather_rows(pub.samples(), row));
            CHECK(m.at(i, 0) == ref[0]);
            CHECK(m.at(i, 2) == ref[2]);
            CHECK(m.passes()[i] == 1);
        }
        CHECK_THROWS_AS(m.at(0, 1), Error);
        const auto again = client_logits(net, pub, {true, false, true});
        for (std::size_t i = 0; i < 10; ++i) CHECK(again.at(i, 2) == m.at(i, 2));
    }
    SUBCASE("constant network gives identical rows") {
        auto flat = net;
        for (auto &p : flat.parameters()) p.fill(0.0f);
        flat.bias(2)->fill(0.5f);
        const auto m = client_logits(flat, pub, {true, true, true});
        for (std::size_t i = 0; i < 10; ++i)
            for (std::size_t t = 0; t < 3; ++t) CHECK(m.at(i, t) == 0.5f);
    }
    SUBCASE("empty coverage is refused") {
        CHECK_THROWS_AS(client_logits(net, pub, {false, false, false}), Error);
        CHECK_THROWS_AS(client_logits(net, pub, {true, true}), ShapeError);
    }
}

TEST_CASE("teacher aggregation") {
    auto matrix = [](std::vector<bool> cov, float base) {
        LogitMatrix m(2, cov);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t < cov.size(); ++t)
                if (cov[t]) m.set(i, t, base + static_cast<float>(10 * i + t));
        return m;
    };
    SUBCASE("single client is passed through") {
        const std::vector<LogitMatrix> mats{matrix({true, true}, 1.0f)};
        const auto z = aggregate_teacher_logits(mats, compute_importance_weights({{4, 2}}));
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t t = 0; t < 2; ++t) CHECK(z.at(i, t) == mats[0].at(i, t));
    }
    SUBCASE("equal counts average element-wise") {
        const std::vector<LogitMatrix> mats{matrix({true, true}, 0.0f), matrix({true, true}, 4.0f)};
        const auto z = aggregate_teacher_logits(mats, compute_importance_weights({{5, 5}, {5, 5}}));
        CHECK(z.at(1, 1) == doctest::Approx(11.0 + 2.0));
    }
    SUBCASE("class covered by one client takes its logits") {
        const std::vector<LogitMatrix> mats{matrix({true, false}, 0.0f), matrix({true, true}, 4.0f)};
        const auto z = aggregate_teacher_logits(mats, compute_importance_weights({{30, 0}, {10, 7}}));
        CHECK(z.at(0, 1) == mats[1].at(0, 1));
        CHECK(z.at(1, 0) == doctest::Approx(0.75 * 10.0 + 0.25 * 14.0));
    }
    SUBCASE("a class nobody covers stays absent; no coverage at all is an error") {
        const std::vector<LogitMatrix> mats{matrix({true, false, false}, 0.0f)};
        const auto z = aggregate_teacher_logits(mats, compute_importance_weights({{3, 0, 0}}));
        CHECK_FALSE(z.covered(1));
        LogitMatrix empty(2, {false, false});
        const std::vector<LogitMatrix> none{empty};
        CHECK_THROWS_AS(aggregate_teacher_logits(none, compute_importance_weights({{0, 0}})), Error);
    }
}

TEST_CASE("kd loss") {
    DistillConfig kl;
    kl.temperature = 1.0;
    DistillConfig l2 = kl;
    l2.mode = KdMode::l2;
    const std::vector<bool> all{true, true};

    SUBCASE("identical logits: zero loss and gradient in both modes") {
        const nn::Tensor<double> z({2, 2}, std::vector<double>{1, -2, 0.5, 3});
        for (const auto &cfg : {kl, l2}) {
            const auto r = kd_loss(z, z, all, cfg);
            CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-12));
            for (double g : r.grad.values()) CHECK(g == doctest::Approx(0.0));
        }
    }
    SUBCASE("one-hot teacher vs uniform student is ln 2") {
        const nn::Tensor<double> teacher({1, 2}, std::vector<double>{60, 0});
        const nn::Tensor<double> student({1, 2}, std::vector<double>{0, 0});
        CHECK(kd_loss(student, teacher, all, kl).loss == doctest::Approx(std::log(2.0)));
    }
    SUBCASE("l2 on a 3-4-5 triangle") {
        const nn::Tensor<double> s({1, 2}, std::vector<double>{3, 0}), t({1, 2}, std::vector<double>{0, 4});
        CHECK(kd_loss(s, t, all, l2).loss == doctest::Approx(12.5));
    }
    SUBCASE("non-positive temperature is an error") {
        const nn::Tensor<double> z({1, 2});
        DistillConfig bad = kl;
        bad.temperature = 0.0;
        CHECK_THROWS_AS(kd_loss(z, z, all, bad), Error);
    }
    SUBCASE("uncovered classes have no influence") {
        const nn::Tensor<double> s({1, 3}, std::vector<double>{1, 2, 3}), t({1, 3}, std::vector<double>{0, 99, 1});
        const nn::Tensor<double> s2({1, 3}, std::vector<double>{1, -50, 3});
        const std::vector<bool> mask{true, false, true};
        for (const auto &cfg : {kl, l2}) {
            const auto a = kd_loss(s, t, mask, cfg), b = kd_loss(s2, t, mask, cfg);
            CHECK(a.loss == doctest::Approx(b.loss));
            CHECK(a.grad[1] == 0.0);
        }
    }
    SUBCASE("KL is non-negative and its gradient matches finite differences") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> g(0.0, 2.0);
        DistillConfig cfg;
        cfg.temperature = 3.0;
        for (int trial = 0; trial < 50; ++trial) {
            nn::Tensor<double> s({3, 4}), t({3, 4});
            for (auto &v : s.values()) v = g(rng);
            for (auto &v : t.values()) v = g(rng);
            const std::vector<bool> mask{true, true, trial % 2 == 0, true};
            const auto r = kd_loss(s, t, mask, cfg);
            CHECK(r.loss >= 0.0);
            for (std::size_t i = 0; i < s.size(); ++i) {
                auto up = s, down = s;
                up[i] += 1e-6;
                down[i] -= 1e-6;
                const double fd = (kd_loss(up, t, mask, cfg).loss - kd_loss(down, t, mask, cfg).loss) / 2e-6;
                CHECK(std::abs(fd - r.grad[i]) <= 1e-6);
            }
        }
    }
    SUBCASE("high temperature KL gradient points along the L2 gradient") {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> g(0.0, 1.0);
        DistillConfig hot;
        hot.temperature = 100.0;
        const std::vector<bool> mask(10, true);
        double worst = 1.0;
        for (int trial = 0; trial < 200; ++trial) {
            nn::Tensor<double> s({1, 10}), t({1, 10});
            for (auto &v : s.values()) v = g(rng);
            for (auto &v : t.values()) v = g(rng);
            // The equivalence holds for zero-mean logits.
            for (auto *z : {&s, &t}) {
                const double m = std::accumulate(z->values().begin(), z->values().end(), 0.0) / 10.0;
                for (auto &v : z->values()) v -= m;
            }
            const auto a = kd_loss(s, t, mask, hot).grad, b = kd_loss(s, t, mask, l2).grad;
            worst = std::min(worst, cosine({a.values().begin(), a.values().end()}, {b.values().begin(), b.values().end()}));
        }
        CHECK(worst > 0.999);
    }
}

TEST_CASE("distillation") {
    const auto pub = public_rows(40, 5, 2);
    const auto teacher_net = tiny_mlp(5, 3, 8);
    const auto teacher = client_logits(teacher_net, pub, {true, true, true});

    SUBCASE("zero learning rate leaves the student unchanged") {
        ServerState server{tiny_mlp(5, 3, 1), pub, {}, nullptr};
        server.config.lr = 0.0;
        server.config.steps = 5;
        const auto before = server.global.parameters();
        distill(server, teacher);
        CHECK(server.global.parameters() == before);
    }
    SUBCASE("same architecture, l2 mode: loss goes down") {
        ServerState server{tiny_mlp(5, 3, 1), pub, {}, nullptr};
        server.config.mode = KdMode::l2;
        server.config.steps = 300;
        server.config.batch_size = 16;
        server.config.lr = 1e-2;
        const auto r = distill(server, teacher);
        CHECK(r.step_loss.size() == 300);
        CHECK(r.final_loss < r.initial_loss);
        const double head = std::accumulate(r.step_loss.begin(), r.step_loss.begin() + 30, 0.0);
        const double tail = std::accumulate(r.step_loss.end() - 30, r.step_loss.end(), 0.0);
        CHECK(tail < head);
    }
    SUBCASE("config validation") {
        DistillConfig cfg;
        CHECK(cfg.temperature == 4.0);
        CHECK(cfg.steps == 200);
        CHECK(cfg.batch_size == 512);
        CHECK(cfg.lr == 1e-3);
        cfg.steps = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

// The server-facing operations have no way to receive labeled data.
static_assert(!std::is_constructible_v<data::PublicDataset, data::LabeledDataset>);
static_assert(!std::is_invocable_v<decltype(&distill), ServerState &, const data::LabeledDataset &>);
static_assert(!std::is_invocable_v<decltype(&aggregate_teacher_logits), std::span<const data::LabeledDataset>,
                                   const ImportanceWeights &>);

TEST_CASE("fedavg aggregation") {
    SUBCASE("identical models") {
        const auto a = tiny_mlp(3, 2, 1);
        const std::vector<nn::Network> models{a, a, a};
        const std::vector<std::size_t> sizes{1, 5, 2};
        const auto avg = fedavg_aggregate(models, sizes);
        for (std::size_t p = 0; p < a.parameters().size(); ++p)
            for (std::size_t i = 0; i < a.parameters()[p].size(); ++i)
                CHECK(avg.parameters()[p][i] == doctest::Approx(a.parameters()[p][i]));
    }
    SUBCASE("scalar 0 and 4 with sizes 1 and 3") {
        nn::Network a(nn::Architecture({1}, {LayerSpec::dense(1, 1, false)})), b = a;
        a.parameters()[0][0] = 0.0f;
        b.parameters()[0][0] = 4.0f;
        const std::vector<nn::Network> models{a, b};
        const std::vector<std::size_t> sizes{1, 3};
        CHECK(fedavg_aggregate(models, sizes).parameters()[0][0] == 3.0f);
    }
    SUBCASE("random three-client case matches a per-parameter oracle") {
        std::mt19937_64 rng(3);
        const auto arch = testing::random_architecture(rng);
        std::vector<nn::Network> models;
        for (std::uint64_t s = 0; s < 3; ++s) {
            models.emplace_back(arch);
            models.back().init_kaiming_uniform(s + 10);
        }
        const std::vector<std::size_t> sizes{7, 1, 12};
        const auto avg = fedavg_aggregate(models, sizes);
        for (std::size_t p = 0; p < avg.parameters().size(); ++p) {
            for (std::size_t i = 0; i < avg.parameters()[p].size(); ++i) {
                const double expected = (7.0 * models[0].parameters()[p][i] + 1.0 * models[1].parameters()[p][i] +
                                         12.0 * models[2].parameters()[p][i]) /
                                        20.0;
                CHECK(avg.parameters()[p][i] == doctest::Approx(expected).epsilon(1e-6));
            }
        }
    }
    SUBCASE("heterogeneous models are refused") {
        const std::vector<nn::Network> models{tiny_mlp(3, 2, 1), tiny_mlp(4, 2, 1)};
        const std::vector<std::size_t> sizes{1, 1};
        CHECK_THROWS_AS(fedavg_aggregate(models, sizes), ArchitectureMismatchError);
    }
}

TEST_CASE("global loss") {
    CHECK(global_loss(std::vector<double>{0.7}, std::vector<std::size_t>{12}) == doctest::Approx(0.7));
    CHECK(global_loss(std::vector<double>{1.0, 2.0}, std::vector<std::size_t>{10, 30}) == doctest::Approx(1.75));

    // Shared model: the weighted client losses equal the pooled mean loss.
    const auto net = tiny_mlp(4, 3, 2);
    const auto pooled = data::synth_dataset(3, 30, {4}, 2.0, 6);
    const auto shards = data::dirichlet_partition(pooled, {3, 1.0, 4, 1});
    std::vector<ClientState> clients(3);
    for (std::size_t c = 0; c < 3; ++c) {
        clients[c].model = net;
        clients[c].train = shards[c];
    }
    double brute = 0.0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const std::size_t row[] = {i};
        const int label[] = {pooled.labels[i]};
        brute += nn::cross_entropy_loss(net.predict(data::gather_rows(pooled.samples, row)), label).loss;
    }
    CHECK(global_loss(clients) == doctest::Approx(brute / static_cast<double>(pooled.size())));
}

TEST_CASE("run strategy") {
    SUBCASE("fedavg with one client and one round is plain local training") {
        auto cfg = testing::small_experiment(Strategy::fedavg);
        cfg.clients = {{0, 10e9, 1.0}};
        const auto report = run_strategy(cfg);
        REQUIRE(report.completed);
        // Replay: same data, same initial weights, same client seed.
        const auto world_train = data::synth_dataset(data::SynthSpec{4, 100, {1, 8, 8}, 3.0, derive_seed(1, 2),
                                                                     derive_seed(1, 1), 1});
        ClientState c;
        c.id = 0;
        c.train = world_train;
        c.model = nn::Network(nn::make_architecture(nn::ModelId::cnn_small, {1, 8, 8}, 4));
        c.model.init_kaiming_uniform(derive_seed(1, 7));
        c.train_config = cfg.train;
        c.rng_seed = derive_seed(client_seed(1, 0), 0);
        const auto r = local_train(c);
        CHECK(report.clients[0].train_loss == r.final_loss());
        const auto test = data::synth_dataset(data::SynthSpec{4, 25, {1, 8, 8}, 3.0, derive_seed(1, 3), derive_seed(1, 1), 1});
        CHECK(*report.central_acc == accuracy(c.model, test));
    }
    SUBCASE("reft is one-shot and gives strong clients bigger models than static") {
        const auto reft = run_strategy(testing::small_experiment(Strategy::reft));
        const auto stat = run_strategy(testing::small_experiment(Strategy::static_prune));
        REQUIRE(reft.completed);
        REQUIRE(stat.completed);
        using resources::Direction, resources::PayloadKind;
        for (const auto &c : reft.clients) {
            CHECK(reft.ledger.count_for(c.id, Direction::down, PayloadKind::weights) == 1);
            CHECK(reft.ledger.count_for(c.id, Direction::up, PayloadKind::logits) == 1);
            CHECK(c.max_teacher_passes == 1);
        }
        CHECK(reft.ledger.entries().size() == 10);
        CHECK(reft.clients[0].pruning_ratio == doctest::Approx(0.9));
        CHECK(reft.clients[4].pruning_ratio == 0.0);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(stat.clients[i].pruning_ratio == doctest::Approx(0.9));
            CHECK(reft.clients[i].params >= stat.clients[i].params);
        }
        CHECK(reft.clients[4].params > stat.clients[4].params);
        CHECK(reft.clients[3].params > stat.clients[3].params);
        CHECK(stat.clients[0].utilization == doctest::Approx(1.0));
        CHECK(stat.clients[4].utilization == doctest::Approx(0.1));
        CHECK(reft.distill->step_loss.size() == 20);
    }
    SUBCASE("heterogeneous widths: reft completes, fedavg refuses") {
        auto cfg = testing::small_experiment(Strategy::reft);
        cfg.clients[1].width_scale = 0.5;
        cfg.clients[3].width_scale = 1.5;
        CHECK(run_strategy(cfg).completed);
        cfg.strategy = Strategy::fedavg;
        RunReport partial;
        CHECK_THROWS_AS(run_strategy(cfg, {}, partial), ArchitectureMismatchError);
        CHECK_FALSE(partial.completed);
        CHECK(partial.error.find("heterogeneous") != std::string::npos);
        CHECK(partial.ledger.entries().size() == 10); // round 0 transfers were kept
    }
    SUBCASE("metrics are identical across thread counts") {
        auto cfg = testing::small_experiment(Strategy::reft, 4);
        std::ostringstream one, three;
        run_strategy(cfg, {1}).write_metrics_csv(one);
        run_strategy(cfg, {3}).write_metrics_csv(three);
        CHECK(one.str() == three.str());
        CHECK(one.str().rfind("round,client_id,stage,train_loss,test_acc,bytes_down,bytes_up,params,flops,pruning_ratio\n", 0) == 0);
    }
    SUBCASE("config violations") {
        auto cfg = testing::small_experiment(Strategy::reft);
        cfg.f_lambda = 0.0;
        CHECK_THROWS_AS(run_strategy(cfg), ConfigError);
    }
}
