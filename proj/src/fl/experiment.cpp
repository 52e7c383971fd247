// SPDX-License-Identifier: Apache-2.0
#include "reft/fl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <ostream>
#include <set>
#include <thread>

#include "reft/errors.hpp"
#include "reft/fl/client.hpp"
#include "reft/fl/fedavg.hpp"
#include "reft/nn/counters.hpp"
#include "reft/pruning/pruning.hpp"

namespace reft::fl {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::static_prune: return "static";
    case Strategy::reft: return "reft";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view name) {
    if (name == "fedavg") return Strategy::fedavg;
    if (name == "static") return Strategy::static_prune;
    if (name == "reft") return Strategy::reft;
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected fedavg, static or reft)");
}

void ExperimentConfig::validate() const {
    if (clients.empty()) throw ConfigError("clients: at least one client profile is required");
    std::set<std::uint32_t> ids;
    for (const auto &c : clients) {
        if (!ids.insert(c.id).second) throw ConfigError("clients: duplicate id " + std::to_string(c.id));
        if (!(c.flops > 0.0)) throw ConfigError("clients: flops of client " + std::to_string(c.id) + " must be positive");
        if (!(c.width_scale > 0.0)) {
            throw ConfigError("clients: width_scale of client " + std::to_string(c.id) + " must be positive");
        }
    }
    if (!(f_lambda > 0.0)) throw ConfigError("f_lambda must be positive");
    if (rounds == 0) throw ConfigError("rounds must be at least 1");
    if (!(partition.alpha > 0.0)) throw ConfigError("partition.alpha must be positive");
    if (dataset.source == "synthetic") {
        if (dataset.classes == 0) throw ConfigError("dataset.classes must be at least 1");
        if (dataset.train_per_class == 0) throw ConfigError("dataset.train_per_class must be at least 1");
        if (dataset.sample_shape.empty() || nn::shape_size(dataset.sample_shape) == 0) {
            throw ConfigError("dataset.sample_shape must be non-empty with positive extents");
        }
        if (dataset.separation < 0.0) throw ConfigError("dataset.separation must be non-negative");
        if (dataset.modes_per_class == 0) throw ConfigError("dataset.modes_per_class must be at least 1");
        if (dataset.public_size == 0) throw ConfigError("dataset.public_size must be at least 1");
    } else if (dataset.source == "raw") {
        if (!dataset.raw || dataset.raw->train.empty() || dataset.raw->test.empty() || dataset.raw->public_set.empty()) {
            throw ConfigError("dataset.raw needs train, test and public paths");
        }
    } else {
        throw ConfigError("dataset.source must be synthetic or raw (got '" + dataset.source + "')");
    }
    train.validate();
    distill.validate();
    cost.validate();
}

namespace {

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F &&fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto &t : pool) t.join();
    }
    // Lowest client first, so the reported error does not depend on scheduling.
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

struct World {
    data::LabeledDataset train;
    data::LabeledDataset test;
    data::PublicDataset public_set;
    std::size_t classes = 0;
    nn::Shape sample_shape;
};

World build_world(const ExperimentConfig &cfg) {
    World w;
    const auto &d = cfg.dataset;
    if (d.source == "raw") {
        const auto &r = *d.raw;
        const data::RawFormat fmt{r.channels, r.height, r.width, r.classes, {}, {}};
        w.train = data::load_raw(r.train, fmt);
        w.test = data::load_raw(r.test, fmt);
        w.public_set = data::PublicDataset::strip_labels(data::load_raw(r.public_set, fmt));
        w.classes = r.classes;
        w.sample_shape = {r.channels, r.height, r.width};
        return w;
    }
    const std::uint64_t domain = derive_seed(cfg.seed, 1);
    auto spec = [&](std::size_t per_class, std::uint64_t stream, std::uint64_t dom) {
        return data::SynthSpec{d.classes, per_class, d.sample_shape, d.separation, derive_seed(cfg.seed, stream), dom,
                               d.modes_per_class};
    };
    w.train = data::synth_dataset(spec(d.train_per_class, 2, domain));
    w.test = data::synth_dataset(spec(d.test_per_class, 3, domain));
    const std::size_t pub_per_class = (d.public_size + d.classes - 1) / d.classes;
    auto pub = data::synth_dataset(spec(pub_per_class, 4, d.public_shifted ? derive_seed(cfg.seed, 5) : domain));
    std::vector<std::size_t> rows(d.public_size);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    w.public_set = data::PublicDataset(data::gather_rows(pub.samples, rows));
    w.classes = d.classes;
    w.sample_shape = d.sample_shape;
    return w;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

void run_strategy(const ExperimentConfig &config, const RunOptions &options, RunReport &report) {
    report = RunReport{};
    report.config = config;
    try {
        config.validate();
        auto profiles_cfg = config.clients;
        std::sort(profiles_cfg.begin(), profiles_cfg.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
        const std::size_t n = profiles_cfg.size();

        const World world = build_world(config);
        const auto shards = data::dirichlet_partition(
            world.train, {n, config.partition.alpha, derive_seed(config.seed, 6), config.partition.min_shard});

        const auto global_arch = nn::make_architecture(config.model, world.sample_shape, world.classes, 1.0);
        nn::Network global(global_arch);
        global.init_kaiming_uniform(derive_seed(config.seed, 7));
        report.global_params = nn::count_params(global);
        report.global_flops = nn::count_flops(global_arch);

        std::vector<pruning::HardwareProfile> hw;
        std::vector<ClientState> clients(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto &p = profiles_cfg[i];
            hw.push_back({p.id, p.flops, {}});
            auto &c = clients[i];
            c.id = p.id;
            c.train = shards[i];
            c.profile = hw.back();
            c.train_config = config.train;
            c.rng_seed = client_seed(config.seed, p.id);
            if (p.width_scale == 1.0) {
                c.model = global;
            } else {
                c.model = nn::Network(nn::make_architecture(config.model, world.sample_shape, world.classes, p.width_scale));
                c.model.init_kaiming_uniform(derive_seed(config.seed, 0x20000ull + p.id));
            }
            ClientReport cr;
            cr.id = p.id;
            cr.client_flops = p.flops;
            cr.shard_size = c.train.size();
            cr.class_counts = data::class_counts(c.train);
            report.clients.push_back(cr);
        }

        auto &ledger = report.ledger;
        const auto &cost = config.cost;
        auto finish_client = [&](std::size_t i, double ratio, double train_loss) {
            auto &cr = report.clients[i];
            cr.pruning_ratio = ratio;
            cr.params = nn::count_params(clients[i].model);
            cr.flops = nn::count_flops(clients[i].model.architecture());
            cr.train_loss = train_loss;
            cr.test_acc = accuracy(clients[i].model, world.test);
            cr.utilization = resources::utilization_factor((1.0 - ratio) * config.f_lambda, cr.client_flops);
        };

        if (config.strategy == Strategy::fedavg) {
            std::vector<std::size_t> sizes;
            for (const auto &c : clients) sizes.push_back(c.train.size());
            for (std::uint32_t round = 0; round < config.rounds; ++round) {
                std::vector<std::uint64_t> down(n), up(n);
                for (std::size_t i = 0; i < n; ++i) {
                    if (profiles_cfg[i].width_scale == 1.0) clients[i].model = global;
                    down[i] = clients[i].model.param_count();
                    resources::record_transfer(ledger, clients[i].id, round, resources::Direction::down,
                                               resources::PayloadKind::weights, down[i], cost);
                }
                std::vector<TrainResult> results(n);
                parallel_for(n, options.threads, [&](std::size_t i) {
                    auto local = clients[i];
                    local.rng_seed = derive_seed(clients[i].rng_seed, round);
                    results[i] = local_train(local);
                    clients[i].model = std::move(local.model);
                });
                std::vector<nn::Network> models;
                for (std::size_t i = 0; i < n; ++i) {
                    up[i] = clients[i].model.param_count();
                    resources::record_transfer(ledger, clients[i].id, round, resources::Direction::up,
                                               resources::PayloadKind::weights, up[i], cost);
                    finish_client(i, 0.0, results[i].final_loss());
                    const auto &cr = report.clients[i];
                    report.metrics.push_back({round, clients[i].id, "local", cr.train_loss, cr.test_acc,
                                              resources::weight_payload_bytes(down[i], cost.bits),
                                              resources::weight_payload_bytes(up[i], cost.bits), cr.params, cr.flops, 0.0});
                    models.push_back(clients[i].model);
                }
                global = fedavg_aggregate(models, sizes);
                std::vector<double> losses;
                for (const auto &c : clients) losses.push_back(mean_loss(global, c.train));
                const double acc = accuracy(global, world.test);
                report.central_acc = acc;
                report.metrics.push_back({round, std::nullopt, "aggregate", global_loss(losses, sizes), acc, 0, 0,
                                          report.global_params, report.global_flops, 0.0});
            }
            report.completed = true;
            return;
        }

        // static / reft: one-shot prune, local training, logit upload, distillation.
        const double static_ratio = pruning::static_pruning_ratio(hw, config.f_lambda);
        std::vector<double> ratios(n);
        std::vector<std::uint64_t> down(n), up(n);
        for (std::size_t i = 0; i < n; ++i) {
            ratios[i] = config.strategy == Strategy::static_prune
                            ? static_ratio
                            : pruning::variable_pruning_ratio(hw[i].flops, config.f_lambda);
            auto pruned = pruning::plan_uniform_pruning({&hw[i], 1}, config.f_lambda, ratios[i], clients[i].model);
            clients[i].model = std::move(pruned.front().model);
            down[i] = clients[i].model.param_count();
            resources::record_transfer(ledger, clients[i].id, 0, resources::Direction::down,
                                       resources::PayloadKind::weights, down[i], cost);
        }

        std::vector<TrainResult> results(n);
        std::vector<LogitMatrix> mats(n);
        parallel_for(n, options.threads, [&](std::size_t i) {
            results[i] = local_train(clients[i]);
            mats[i] = client_logits(clients[i].model, world.public_set, shard_coverage(clients[i].train));
        });

        std::vector<std::vector<std::size_t>> counts;
        for (std::size_t i = 0; i < n; ++i) {
            up[i] = mats[i].payload_size();
            resources::record_transfer(ledger, clients[i].id, 0, resources::Direction::up,
                                       resources::PayloadKind::logits, up[i], cost);
            finish_client(i, ratios[i], results[i].final_loss());
            auto &cr = report.clients[i];
            cr.max_teacher_passes = *std::max_element(mats[i].passes().begin(), mats[i].passes().end());
            report.metrics.push_back({0, clients[i].id, "local", cr.train_loss, cr.test_acc,
                                      resources::weight_payload_bytes(down[i], cost.bits),
                                      resources::bandwidth_logits(up[i], 1, cost.effective_logit_bits()), cr.params,
                                      cr.flops, ratios[i]});
            counts.push_back(cr.class_counts);
        }

        const auto weights = compute_importance_weights(counts);
        const auto teacher = aggregate_teacher_logits(mats, weights);

        ServerState server{std::move(global), world.public_set, config.distill, &ledger};
        server.config.seed = derive_seed(config.seed, 8);
        report.distill = distill(server, teacher);
        report.central_acc = accuracy(server.global, world.test);
        report.metrics.push_back({0, std::nullopt, "distill", report.distill->final_loss, *report.central_acc, 0, 0,
                                  report.global_params, report.global_flops, 0.0});
        report.completed = true;
    } catch (const std::exception &e) {
        report.completed = false;
        report.error = e.what();
        throw;
    }
}

RunReport run_strategy(const ExperimentConfig &config, const RunOptions &options) {
    RunReport report;
    run_strategy(config, options, report);
    return report;
}

void RunReport::write_metrics_csv(std::ostream &out) const {
    out << "round,client_id,stage,train_loss,test_acc,bytes_down,bytes_up,params,flops,pruning_ratio\n";
    for (const auto &m : metrics) {
        out << m.round << ',' << (m.client ? std::to_string(*m.client) : std::string("server")) << ',' << m.stage
            << ',' << fixed(m.train_loss, 6) << ',' << fixed(m.test_acc, 6) << ',' << m.bytes_down << ','
            << m.bytes_up << ',' << m.params << ',' << m.flops << ',' << fixed(m.pruning_ratio, 6) << '\n';
    }
}

nlohmann::json config_to_json(const ExperimentConfig &c) {
    using nlohmann::json;
    json clients = json::array();
    for (const auto &p : c.clients) clients.push_back({{"id", p.id}, {"flops", p.flops}, {"width_scale", p.width_scale}});
    json dataset = {{"source", c.dataset.source},
                    {"classes", c.dataset.classes},
                    {"train_per_class", c.dataset.train_per_class},
                    {"test_per_class", c.dataset.test_per_class},
                    {"public_size", c.dataset.public_size},
                    {"sample_shape", c.dataset.sample_shape},
                    {"separation", c.dataset.separation},
                    {"modes_per_class", c.dataset.modes_per_class},
                    {"public_shifted", c.dataset.public_shifted}};
    if (c.dataset.raw) {
        const auto &r = *c.dataset.raw;
        dataset["raw"] = {{"train", r.train},       {"test", r.test},     {"public", r.public_set},
                          {"channels", r.channels}, {"height", r.height}, {"width", r.width},
                          {"classes", r.classes}};
    }
    return {
        {"seed", c.seed},
        {"model", nn::to_string(c.model)},
        {"strategy", to_string(c.strategy)},
        {"rounds", c.rounds},
        {"f_lambda", c.f_lambda},
        {"clients", clients},
        {"dataset", dataset},
        {"partition", {{"alpha", c.partition.alpha}, {"min_shard", c.partition.min_shard}}},
        {"train",
         {{"optimizer", nn::to_string(c.train.optimizer)},
          {"schedule", nn::to_string(c.train.schedule)},
          {"lr_max", c.train.lr_max},
          {"lr_min", c.train.lr_min},
          {"momentum", c.train.momentum},
          {"weight_decay", c.train.weight_decay},
          {"batch_size", c.train.batch_size},
          {"epochs", c.train.epochs}}},
        {"distill",
         {{"temperature", c.distill.temperature},
          {"loss", to_string(c.distill.mode)},
          {"steps", c.distill.steps},
          {"batch_size", c.distill.batch_size},
          {"optimizer", nn::to_string(c.distill.optimizer)},
          {"lr", c.distill.lr}}},
        {"cost",
         {{"bits", c.cost.bits}, {"logit_bits", c.cost.logit_bits ? json(*c.cost.logit_bits) : json(nullptr)}}},
    };
}

nlohmann::json RunReport::to_json() const {
    using nlohmann::json;
    json j;
    j["config"] = config_to_json(config);
    j["completed"] = completed;
    if (!error.empty()) j["error"] = error;
    j["global_model"] = {{"params", global_params}, {"flops", global_flops}};
    j["central_acc"] = central_acc ? json(*central_acc) : json(nullptr);
    if (distill) {
        j["distillation"] = {{"initial_loss", distill->initial_loss},
                             {"final_loss", distill->final_loss},
                             {"steps", distill->step_loss.size()}};
    }
    json cl = json::array();
    for (const auto &c : clients) {
        cl.push_back({{"id", c.id},
                      {"client_flops", c.client_flops},
                      {"pruning_ratio", c.pruning_ratio},
                      {"utilization", c.utilization},
                      {"params", c.params},
                      {"flops", c.flops},
                      {"shard_size", c.shard_size},
                      {"class_counts", c.class_counts},
                      {"train_loss", c.train_loss},
                      {"test_acc", c.test_acc},
                      {"max_teacher_passes", c.max_teacher_passes}});
    }
    j["clients"] = cl;

    json bw = json::array();
    for (const auto &t : ledger.per_client()) {
        bw.push_back({{"client", t.client},
                      {"downstream_bytes", t.down},
                      {"upstream_bytes", t.up},
                      {"total_bytes", t.total()},
                      {"downstream", resources::format_bytes(t.down)},
                      {"upstream", resources::format_bytes(t.up)},
                      {"total", resources::format_bytes(t.total())}});
    }
    j["bandwidth"] = {{"per_client", bw},
                      {"downstream_bytes", ledger.total_bytes(resources::Direction::down)},
                      {"upstream_bytes", ledger.total_bytes(resources::Direction::up)},
                      {"total_bytes", ledger.total_bytes()}};

    // Closed-form rows for weight-sharing methods on the global model, per client.
    json rows = json::array();
    for (const auto &r : resources::baseline_cost_rows(global_params, config.rounds, config.cost)) {
        rows.push_back({{"method", r.method},
                        {"downstream_per_round", r.down_per_round},
                        {"upstream_per_round", r.up_per_round},
                        {"rounds", r.rounds},
                        {"total_bytes", r.total()},
                        {"modeled", true}});
    }
    j["baseline_cost_rows"] = rows;
    return j;
}

} // namespace reft::fl
