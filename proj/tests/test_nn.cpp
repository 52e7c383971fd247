// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "reft/nn/checkpoint.hpp"
#include "reft/nn/counters.hpp"
#include "reft/nn/loss.hpp"
#include "reft/nn/models.hpp"
#include "reft/nn/network.hpp"
#include "reft/nn/optim.hpp"
#include "support/random_nets.hpp"

using namespace reft;
using namespace reft::nn;

TEST_CASE("dense identity forward returns its input") {
    Network net(Architecture({3}, {LayerSpec::dense(3, 3)}));
    auto &w = net.weight(0);
    for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
    Tensor<float> x({2, 3}, {1, -2, 3, 0.5f, 0, -1});
    CHECK(net.forward(x).storage() == x.storage());
}

TEST_CASE("1x1 conv with kernel 2 doubles an input of ones") {
    Network net(Architecture({1, 2, 2}, {LayerSpec::conv2d(1, 1, 1), LayerSpec::flatten()}));
    net.weight(0)[0] = 2.0f;
    const auto y = net.forward(Tensor<float>({1, 1, 2, 2}, 1.0f));
    for (float v : y.values()) CHECK(v == 2.0f);
}

TEST_CASE("MLP forward matches a hand-rolled matrix product oracle") {
    std::mt19937_64 rng(11);
    Network net(Architecture({5}, {LayerSpec::dense(5, 7), LayerSpec::relu(), LayerSpec::dense(7, 3)}));
    testing::randomize(net, rng);
    const auto x = testing::random_tensor<float>({4, 5}, rng);
    const auto y = net.forward(x);

    const auto &w1 = net.weight(0), &b1 = *net.bias(0), &w2 = net.weight(2), &b2 = *net.bias(2);
    for (std::size_t n = 0; n < 4; ++n) {
        std::vector<double> h(7);
        for (std::size_t j = 0; j < 7; ++j) {
            double acc = b1[j];
            for (std::size_t i = 0; i < 5; ++i) acc += double(w1[j * 5 + i]) * x[n * 5 + i];
            h[j] = std::max(acc, 0.0);
        }
        for (std::size_t k = 0; k < 3; ++k) {
            double acc = b2[k];
            for (std::size_t j = 0; j < 7; ++j) acc += double(w2[k * 7 + j]) * h[j];
            CHECK(y[n * 3 + k] == doctest::Approx(acc).epsilon(1e-6));
        }
    }
}

TEST_CASE("forward rejects a mismatched batch and names the expected shape") {
    Network net(Architecture({1, 4, 4}, {LayerSpec::conv2d(1, 2, 3), LayerSpec::flatten()}));
    CHECK_THROWS_AS(net.forward(Tensor<float>({2, 1, 5, 5})), ShapeError);
}

TEST_CASE("architecture validation names the offending layer") {
    try {
        Architecture({3, 8, 8}, {LayerSpec::conv2d(4, 8, 3), LayerSpec::flatten()});
        FAIL("expected a shape error");
    } catch (const ShapeError &e) {
        CHECK(std::string(e.what()).find("layer 0 (conv2d)") != std::string::npos);
    }
    CHECK_THROWS_AS(Architecture({3, 8, 8}, {LayerSpec::conv2d(3, 8, 3, 1, 3), LayerSpec::flatten()}), ShapeError);
    CHECK_THROWS_AS(Architecture({2, 4, 4}, {LayerSpec::conv2d(2, 3, 1), LayerSpec::residual_add(kNetworkInput),
                                             LayerSpec::flatten()}),
                    ShapeError);
}

TEST_CASE("backward before forward is an error") {
    Network net(Architecture({2}, {LayerSpec::dense(2, 2)}));
    CHECK_THROWS_AS(net.backward(Tensor<float>({1, 2})), Error);
}

TEST_CASE("bias gradient of a summed bias-only layer equals the batch size") {
    Network net(Architecture({3}, {LayerSpec::dense(3, 4)}));
    net.forward(Tensor<float>({5, 3}, 0.0f));
    const auto grads = net.backward(Tensor<float>({5, 4}, 1.0f));
    for (float g : grads[1].values()) CHECK(g == 5.0f);
}

TEST_CASE("dense layer with half squared norm loss: dW = y x^T") {
    Network net(Architecture({2}, {LayerSpec::dense(2, 2, false)}));
    net.weight(0).storage() = {1, 2, 3, 4};
    const auto y = net.forward(Tensor<float>({1, 2}, {1, -1})); // y = (-1, -1)
    const auto grads = net.backward(y);                        // dL/dy = y
    CHECK(grads[0].storage() == std::vector<float>{-1, 1, -1, 1});
}

TEST_CASE("3-layer CNN gradients match central finite differences") {
    std::mt19937_64 rng(3);
    NetworkF64 net(Architecture({1, 5, 5}, {LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(),
                                            LayerSpec::maxpool2d(2, 2), LayerSpec::conv2d(2, 3, 2),
                                            LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(3, 4)}));
    CHECK(net.param_count() <= 500);
    testing::randomize(net, rng);
    const auto x = testing::random_batch<double>(net.architecture(), 3, rng);
    CHECK(testing::max_fd_relative_error(net, x, rng, 1e-4) < 1e-4);
}

TEST_CASE("property: random networks with residual blocks pass the gradient check") {
    std::mt19937_64 rng(17);
    int checked = 0;
    while (checked < 20) {
        const auto arch = testing::random_architecture(rng);
        if (count_params(arch) > 1000) continue;
        NetworkF64 net(arch);
        testing::randomize(net, rng);
        const auto x = testing::random_batch<double>(arch, 2, rng);
        INFO("network #" << checked << " with " << count_params(arch) << " params");
        CHECK(testing::max_fd_relative_error(net, x, rng, 1e-5) < 1e-4);
        ++checked;
    }
}

TEST_CASE("sgd momentum step") {
    ParamList<float> p{Tensor<float>({1}, 1.0f)};
    OptimizerState<float> state;

    SUBCASE("plain gradient descent when momentum and decay are zero") {
        sgd_momentum_step(p, {Tensor<float>({1}, 2.0f)}, state, 0.1, 0.0, 0.0);
        CHECK(p[0][0] == doctest::Approx(0.8));
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        sgd_momentum_step(p, {Tensor<float>({1}, 0.0f)}, state, 0.1, 0.9, 0.0);
        CHECK(p[0][0] == 1.0f);
    }
    SUBCASE("two momentum steps follow the recurrence") {
        ParamList<double> pd{Tensor<double>({1}, 1.0)};
        OptimizerState<double> sd;
        const double lr = 0.1, mu = 0.9, wd = 0.01, g1 = 2.0, g2 = -0.5;
        sgd_momentum_step(pd, {Tensor<double>({1}, g1)}, sd, lr, mu, wd);
        sgd_momentum_step(pd, {Tensor<double>({1}, g2)}, sd, lr, mu, wd);
        double param = 1.0, v = 0.0;
        for (double g : {g1, g2}) {
            v = mu * v + g + wd * param;
            param -= lr * v;
        }
        CHECK(pd[0][0] == doctest::Approx(param).epsilon(1e-14));
        CHECK(sd.first[0][0] == doctest::Approx(v).epsilon(1e-14));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(sgd_momentum_step(p, {Tensor<float>({2})}, state, 0.1, 0.9, 0.0), ShapeError);
    }
}

TEST_CASE("adam step") {
    SUBCASE("zero gradient from fresh state leaves parameters unchanged") {
        ParamList<double> p{Tensor<double>({2}, {0.5, -1.0})};
        OptimizerState<double> s;
        adam_step(p, {Tensor<double>({2}, 0.0)}, s, 1e-3);
        CHECK(p[0][0] == 0.5);
        CHECK(p[0][1] == -1.0);
    }
    SUBCASE("constant gradient: first step is about -lr independent of magnitude") {
        for (double g : {1e-3, 1.0, 1e3}) {
            ParamList<double> p{Tensor<double>({1}, 0.0)};
            OptimizerState<double> s;
            adam_step(p, {Tensor<double>({1}, g)}, s, 1e-3);
            // Scalar oracle: mhat = g, vhat = g^2.
            const double expected = -1e-3 * g / (std::abs(g) + 1e-8);
            CHECK(p[0][0] == doctest::Approx(expected).epsilon(1e-12));
            CHECK(p[0][0] == doctest::Approx(-1e-3).epsilon(1e-4));
        }
    }
    SUBCASE("updates oppose a constant gradient") {
        for (double g : {-3.0, 0.25}) {
            ParamList<double> p{Tensor<double>({1}, 0.0)};
            OptimizerState<double> s;
            double prev = 0.0;
            for (int i = 0; i < 10; ++i) {
                adam_step(p, {Tensor<double>({1}, g)}, s, 1e-2);
                CHECK((p[0][0] - prev) * g < 0.0);
                prev = p[0][0];
            }
        }
    }
}

TEST_CASE("cosine annealing schedule") {
    CHECK(cosine_anneal_lr(0, 100, 0.0025, 0.001) == doctest::Approx(0.0025));
    CHECK(cosine_anneal_lr(100, 100, 0.0025, 0.001) == doctest::Approx(0.001));
    CHECK(cosine_anneal_lr(50, 100, 0.0025, 0.001) == doctest::Approx(0.00175));
    CHECK(cosine_anneal_lr(150, 100, 0.0025, 0.001) == 0.001);
    double prev = 1.0;
    for (std::uint64_t s = 0; s <= 1000; ++s) {
        const double lr = cosine_anneal_lr(s, 1000, 0.0025, 0.001);
        CHECK(lr <= prev);
        prev = lr;
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.lr_max = 0.0001;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("cross entropy") {
    SUBCASE("uniform logits give ln T") {
        const int labels[] = {0, 3};
        const auto r = cross_entropy_loss(Tensor<double>({2, 5}, 0.7), labels);
        CHECK(r.loss == doctest::Approx(std::log(5.0)));
    }
    SUBCASE("strongly peaked logits give ~0") {
        Tensor<double> logits({1, 3}, {0.0, 25.0, 0.0});
        const int labels[] = {1};
        CHECK(cross_entropy_loss(logits, labels).loss < 1e-8);
    }
    SUBCASE("3-class hand arithmetic") {
        Tensor<double> logits({1, 3}, {1.0, 2.0, 3.0});
        const int labels[] = {2};
        const auto r = cross_entropy_loss(logits, labels);
        const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
        CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
        CHECK(r.loss == doctest::Approx(0.4076).epsilon(1e-4));
        const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
        CHECK(r.grad[2] == doctest::Approx(std::exp(3.0) / z - 1.0));
    }
    SUBCASE("label out of range") {
        const int labels[] = {3};
        CHECK_THROWS_AS(cross_entropy_loss(Tensor<double>({1, 3}), labels), Error);
    }
}

TEST_CASE("parameter counts") {
    CHECK(count_params(Architecture({4}, {LayerSpec::dense(4, 3)})) == 15);
    CHECK(count_params(Architecture({2, 5, 5}, {LayerSpec::conv2d(2, 4, 3), LayerSpec::flatten()})) == 76);
    const double vgg = static_cast<double>(count_params(reference_vgg16()));
    CHECK(vgg == doctest::Approx(33.6e6).epsilon(0.05));
    const double resnet_mb = 4.0 * static_cast<double>(count_params(reference_resnet8())) / 1e6;
    CHECK(resnet_mb == doctest::Approx(37.63).epsilon(0.10));
}

TEST_CASE("flop counts (1 MAC = 1 FLOP)") {
    CHECK(count_flops(Architecture({4}, {LayerSpec::dense(4, 3, false)})) == 12);
    const Architecture conv({1, 10, 10}, {LayerSpec::conv2d(1, 1, 3), LayerSpec::flatten()});
    CHECK(count_flops(conv) == 576);
    const Architecture vgg = reference_vgg16();
    CHECK(static_cast<double>(count_flops(vgg)) == doctest::Approx(0.33e9).epsilon(0.10));
    const auto breakdown = count_flop_breakdown(vgg);
    CHECK(breakdown.total_2x() == breakdown.total() + breakdown.macs);
    // Re-evaluating at a larger input scales the conv work.
    CHECK(count_flops(conv, {1, 18, 18}) == 16u * 16u * 9u);
}

TEST_CASE("checkpoint save -> load -> save is byte identical") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10; ++i) {
        Network net(testing::random_architecture(rng));
        testing::randomize(net, rng);
        const std::string first = encode_checkpoint(net);
        const Network back = decode_checkpoint(first);
        CHECK(back.architecture() == net.architecture());
        CHECK(back.parameters() == net.parameters());
        CHECK(encode_checkpoint(back) == first);
        CHECK(first.size() == checkpoint_size(net.architecture()));
        // Serialized tensor payload length equals the parameter count.
        CHECK(first.size() - checkpoint_header(net.architecture()).size() == 4 * count_params(net));
    }
}

TEST_CASE("checkpoint decoding rejects damaged input") {
    Network net(Architecture({2}, {LayerSpec::dense(2, 2)}));
    const std::string bytes = encode_checkpoint(net);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataFormatError);
    CHECK_THROWS_AS(decode_checkpoint("garbage 1\n"), DataFormatError);
}

TEST_CASE("kaiming init is deterministic and bounded") {
    const Architecture arch = make_architecture(ModelId::cnn_small, {1, 8, 8}, 4);
    Network a(arch), b(arch);
    a.init_kaiming_uniform(42);
    b.init_kaiming_uniform(42);
    CHECK(a.parameters() == b.parameters());
    const auto &w = a.weight(0);
    const float bound = std::sqrt(6.0f / 9.0f);
    for (float v : w.values()) CHECK(std::abs(v) <= bound);
    CHECK(a.bias(0)->storage() == std::vector<float>(16, 0.0f));
}

TEST_CASE("identical seeds give bit-identical weights after training steps") {
    const Architecture arch = make_architecture(ModelId::cnn_small, {1, 8, 8}, 3);
    auto train = [&] {
        Network net(arch);
        net.init_kaiming_uniform(9);
        std::mt19937_64 rng(1);
        OptimizerState<float> state;
        for (int step = 0; step < 5; ++step) {
            const auto x = testing::random_batch<float>(arch, 4, rng);
            const int labels[] = {0, 1, 2, 1};
            const auto logits = net.forward(x);
            const auto loss = cross_entropy_loss(logits, labels);
            auto grads = net.backward(loss.grad);
            sgd_momentum_step(net.parameters(), grads, state, 0.01, 0.9, 3e-4);
        }
        return net.parameters();
    };
    CHECK(train() == train());
}
