// SPDX-License-Identifier: Apache-2.0
#include "reft/sim/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "reft/errors.hpp"

namespace reft::sim {

namespace {

using nlohmann::json;

std::size_t line_at(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Collects violations instead of stopping at the first one.
class Reader {
public:
    Reader(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

    // path like "dataset.classes" or "clients[2].flops"
    void fail(const std::string &path, const std::string &what) {
        std::string where = source_;
        if (const auto line = locate(path)) where += ":" + std::to_string(line);
        errors_.push_back(where + ": " + path + ": " + what);
    }

    const std::vector<std::string> &errors() const { return errors_; }

    bool object(const json &j, const std::string &path, std::initializer_list<std::string_view> allowed) {
        if (!j.is_object()) {
            fail(path.empty() ? "(top level)" : path, "expected an object");
            return false;
        }
        for (const auto &[key, value] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                fail(join(path, key), "unknown key");
            }
        }
        return true;
    }

    template <typename T>
    void number(const json &obj, const std::string &path, const char *key, T &out,
                std::function<bool(double)> ok = {}, const char *rule = nullptr, bool required = false) {
        const auto full = join(path, key);
        if (!obj.contains(key)) {
            if (required) fail(full, "required field is missing");
            return;
        }
        const auto &v = obj.at(key);
        if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
                fail(full, "expected a non-negative integer");
                return;
            }
        } else if (!v.is_number()) {
            fail(full, "expected a number");
            return;
        }
        const T value = v.get<T>();
        if (ok && !ok(static_cast<double>(value))) {
            fail(full, rule ? rule : "value out of range");
            return;
        }
        out = value;
    }

    void string(const json &obj, const std::string &path, const char *key, std::string &out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_string()) {
            fail(join(path, key), "expected a string");
            return;
        }
        out = obj.at(key).get<std::string>();
    }

    void boolean(const json &obj, const std::string &path, const char *key, bool &out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_boolean()) {
            fail(join(path, key), "expected true or false");
            return;
        }
        out = obj.at(key).get<bool>();
    }

    // Enumerations: the converter throws ConfigError on an unknown name.
    template <typename T, typename F>
    void name(const json &obj, const std::string &path, const char *key, T &out, F &&convert) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_string()) {
            fail(join(path, key), "expected a string");
            return;
        }
        try {
            out = convert(obj.at(key).get<std::string>());
        } catch (const Error &e) {
            fail(join(path, key), e.what());
        }
    }

    static std::string join(const std::string &path, std::string_view key) {
        return path.empty() ? std::string(key) : path + "." + std::string(key);
    }

private:
    // Finds the key's line by walking the dotted path through the raw text.
    std::size_t locate(const std::string &path) const {
        std::size_t pos = 0;
        std::size_t found = std::string::npos;
        std::stringstream parts(path);
        std::string part;
        while (std::getline(parts, part, '.')) {
            std::size_t index = std::string::npos;
            if (const auto b = part.find('['); b != std::string::npos) {
                index = std::stoul(part.substr(b + 1));
                part = part.substr(0, b);
            }
            const auto hit = text_.find("\"" + part + "\"", pos);
            if (hit == std::string_view::npos) break;
            found = pos = hit;
            if (index != std::string::npos) {
                // Skip to the index-th object of the array.
                std::size_t p = text_.find('[', pos);
                for (std::size_t k = 0; p != std::string_view::npos && k <= index; ++k) p = text_.find('{', p + 1);
                if (p == std::string_view::npos) break;
                found = pos = p;
            }
        }
        return found == std::string::npos ? 0 : line_at(text_, found);
    }

    std::string_view text_;
    std::string source_;
    std::vector<std::string> errors_;
};

auto positive = [](double v) { return v > 0.0; };
auto non_negative = [](double v) { return v >= 0.0; };
auto at_least_one = [](double v) { return v >= 1.0; };

} // namespace

SimConfig parse_config_text(std::string_view text, const std::string &source) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error &e) {
        throw ConfigError(source + ":" + std::to_string(line_at(text, e.byte == 0 ? 0 : e.byte - 1)) +
                          ": not valid JSON: " + e.what());
    }

    Reader r(text, source);
    SimConfig out;
    auto &c = out.experiment;

    if (r.object(root, "", {"seed", "model", "strategy", "rounds", "f_lambda", "clients", "dataset", "partition",
                            "train", "distill", "cost", "output_dir"})) {
        r.number(root, "", "seed", c.seed);
        r.name(root, "", "model", c.model, [](const std::string &s) { return nn::model_id_from_string(s); });
        r.name(root, "", "strategy", c.strategy, [](const std::string &s) { return fl::strategy_from_string(s); });
        r.number(root, "", "rounds", c.rounds, at_least_one, "must be at least 1");
        r.number(root, "", "f_lambda", c.f_lambda, positive, "must be positive (FLOPS)", true);
        r.string(root, "", "output_dir", out.output_dir);

        if (!root.contains("clients")) {
            r.fail("clients", "required field is missing");
        } else if (!root["clients"].is_array() || root["clients"].empty()) {
            r.fail("clients", "expected a non-empty array of client profiles");
        } else {
            std::set<std::uint32_t> ids;
            for (std::size_t i = 0; i < root["clients"].size(); ++i) {
                const auto &cj = root["clients"][i];
                const std::string path = "clients[" + std::to_string(i) + "]";
                fl::ClientProfile p;
                p.id = static_cast<std::uint32_t>(i);
                if (r.object(cj, path, {"id", "flops", "width_scale"})) {
                    r.number(cj, path, "id", p.id);
                    r.number(cj, path, "flops", p.flops, positive, "must be positive (FLOPS)", true);
                    r.number(cj, path, "width_scale", p.width_scale, positive, "must be positive");
                }
                if (!ids.insert(p.id).second) r.fail(path + ".id", "duplicate client id " + std::to_string(p.id));
                c.clients.push_back(p);
            }
        }

        if (root.contains("dataset")) {
            const auto &d = root["dataset"];
            auto &ds = c.dataset;
            if (r.object(d, "dataset", {"source", "classes", "train_per_class", "test_per_class", "public_size",
                                        "sample_shape", "separation", "modes_per_class", "public_shifted", "raw"})) {
                r.string(d, "dataset", "source", ds.source);
                if (ds.source != "synthetic" && ds.source != "raw") r.fail("dataset.source", "must be synthetic or raw");
                r.number(d, "dataset", "classes", ds.classes, at_least_one, "must be at least 1");
                r.number(d, "dataset", "train_per_class", ds.train_per_class, at_least_one, "must be at least 1");
                r.number(d, "dataset", "test_per_class", ds.test_per_class);
                r.number(d, "dataset", "public_size", ds.public_size, at_least_one, "must be at least 1");
                r.number(d, "dataset", "separation", ds.separation, non_negative, "must be non-negative");
                r.number(d, "dataset", "modes_per_class", ds.modes_per_class, at_least_one, "must be at least 1");
                r.boolean(d, "dataset", "public_shifted", ds.public_shifted);
                if (d.contains("sample_shape")) {
                    const auto &s = d["sample_shape"];
                    const bool ok = s.is_array() && !s.empty() &&
                                    std::all_of(s.begin(), s.end(), [](const json &e) {
                                        return e.is_number_unsigned() && e.get<std::size_t>() > 0;
                                    });
                    if (ok) {
                        ds.sample_shape = s.get<nn::Shape>();
                    } else {
                        r.fail("dataset.sample_shape", "expected a non-empty array of positive integers");
                    }
                }
                if (d.contains("raw")) {
                    const auto &rj = d["raw"];
                    fl::RawPaths raw;
                    if (r.object(rj, "dataset.raw",
                                 {"train", "test", "public", "channels", "height", "width", "classes"})) {
                        r.string(rj, "dataset.raw", "train", raw.train);
                        r.string(rj, "dataset.raw", "test", raw.test);
                        r.string(rj, "dataset.raw", "public", raw.public_set);
                        r.number(rj, "dataset.raw", "channels", raw.channels, at_least_one, "must be at least 1");
                        r.number(rj, "dataset.raw", "height", raw.height, at_least_one, "must be at least 1");
                        r.number(rj, "dataset.raw", "width", raw.width, at_least_one, "must be at least 1");
                        r.number(rj, "dataset.raw", "classes", raw.classes, at_least_one, "must be at least 1");
                    }
                    ds.raw = raw;
                }
                if (ds.source == "raw" && (!ds.raw || ds.raw->train.empty() || ds.raw->test.empty() ||
                                           ds.raw->public_set.empty())) {
                    r.fail("dataset.raw", "raw source needs train, test and public paths");
                }
            }
        }

        if (root.contains("partition")) {
            const auto &p = root["partition"];
            if (r.object(p, "partition", {"alpha", "min_shard"})) {
                r.number(p, "partition", "alpha", c.partition.alpha, positive, "must be positive");
                r.number(p, "partition", "min_shard", c.partition.min_shard);
            }
        }

        if (root.contains("train")) {
            const auto &t = root["train"];
            auto &tc = c.train;
            if (r.object(t, "train", {"optimizer", "schedule", "lr_max", "lr_min", "momentum", "weight_decay",
                                      "batch_size", "epochs"})) {
                r.name(t, "train", "optimizer", tc.optimizer, [](const std::string &s) { return nn::optimizer_from_string(s); });
                r.name(t, "train", "schedule", tc.schedule, [](const std::string &s) { return nn::schedule_from_string(s); });
                r.number(t, "train", "lr_max", tc.lr_max, non_negative, "must be non-negative");
                r.number(t, "train", "lr_min", tc.lr_min, non_negative, "must be non-negative");
                r.number(t, "train", "momentum", tc.momentum, non_negative, "must be non-negative");
                r.number(t, "train", "weight_decay", tc.weight_decay, non_negative, "must be non-negative");
                r.number(t, "train", "batch_size", tc.batch_size, at_least_one, "must be at least 1");
                r.number(t, "train", "epochs", tc.epochs);
            }
        }

        if (root.contains("distill")) {
            const auto &d = root["distill"];
            auto &dc = c.distill;
            if (r.object(d, "distill", {"temperature", "loss", "steps", "batch_size", "optimizer", "lr"})) {
                r.number(d, "distill", "temperature", dc.temperature, positive, "must be positive");
                r.name(d, "distill", "loss", dc.mode, [](const std::string &s) { return fl::kd_mode_from_string(s); });
                r.number(d, "distill", "steps", dc.steps, at_least_one, "must be at least 1");
                r.number(d, "distill", "batch_size", dc.batch_size, at_least_one, "must be at least 1");
                r.name(d, "distill", "optimizer", dc.optimizer, [](const std::string &s) { return nn::optimizer_from_string(s); });
                r.number(d, "distill", "lr", dc.lr, non_negative, "must be non-negative");
            }
        }

        if (root.contains("cost")) {
            const auto &k = root["cost"];
            auto width = [](double b) { return b == 8 || b == 16 || b == 32 || b == 64; };
            if (r.object(k, "cost", {"bits", "logit_bits"})) {
                r.number(k, "cost", "bits", c.cost.bits, width, "must be one of 8, 16, 32, 64");
                if (k.contains("logit_bits") && !k["logit_bits"].is_null()) {
                    unsigned b = 0;
                    r.number(k, "cost", "logit_bits", b, width, "must be one of 8, 16, 32, 64");
                    if (width(b)) c.cost.logit_bits = b;
                }
            }
        }
    }

    // Cross-field rules (e.g. lr_max >= lr_min) once the fields themselves are fine.
    if (r.errors().empty()) {
        try {
            c.validate();
        } catch (const ConfigError &e) {
            const std::string msg = e.what();
            r.fail(msg.substr(0, msg.find_first_of(": ")), msg);
        }
    }

    if (!r.errors().empty()) {
        std::string msg = std::to_string(r.errors().size()) + " config error(s):";
        for (const auto &e : r.errors()) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return out;
}

SimConfig parse_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

nlohmann::json resolved_config(const SimConfig &config) {
    auto j = fl::config_to_json(config.experiment);
    j["output_dir"] = config.output_dir;
    return j;
}

} // namespace reft::sim
