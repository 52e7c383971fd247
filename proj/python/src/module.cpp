// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "reft/data/dataset.hpp"
#include "reft/errors.hpp"
#include "reft/fl/distill.hpp"
#include "reft/fl/experiment.hpp"
#include "reft/pruning/pruning.hpp"
#include "reft/resources/resources.hpp"
#include "reft/sim/commands.hpp"
#include "reft/sim/config.hpp"

namespace py = pybind11;
using namespace reft;

namespace {

std::vector<pruning::HardwareProfile> profiles(const std::vector<double> &flops) {
    std::vector<pruning::HardwareProfile> out;
    for (std::size_t i = 0; i < flops.size(); ++i) out.push_back({static_cast<std::uint32_t>(i), flops[i], {}});
    return out;
}

// report as JSON text; the Python side decodes it
std::string run_json(const std::string &config_text, std::size_t threads) {
    const auto cfg = sim::parse_config_text(config_text, "<python>");
    fl::RunReport report;
    {
        py::gil_scoped_release nogil;
        fl::run_strategy(cfg.experiment, {threads}, report);
    }
    return report.to_json().dump();
}

int run_to_dir(const std::string &config_text, const std::filesystem::path &out, std::size_t threads) {
    const auto cfg = sim::parse_config_text(config_text, "<python>");
    std::ostringstream log;
    py::gil_scoped_release nogil;
    return sim::cmd_run(cfg, out, threads, log);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Federated pruning and distillation simulator";

    auto base = py::register_exception<Error>(m, "ReftError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ArchitectureMismatchError>(m, "ArchitectureMismatchError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

    m.def("variable_pruning_ratio", &pruning::variable_pruning_ratio, py::arg("client_flops"), py::arg("f_lambda"));
    m.def(
        "static_pruning_ratio",
        [](const std::vector<double> &flops, double f_lambda) {
            const auto p = profiles(flops);
            return pruning::static_pruning_ratio(p, f_lambda);
        },
        py::arg("client_flops"), py::arg("f_lambda"));

    m.def("weight_payload_bytes", &resources::weight_payload_bytes, py::arg("params"), py::arg("bits") = 32);
    m.def("bandwidth_weights", &resources::bandwidth_weights, py::arg("clients"), py::arg("rounds"), py::arg("params"),
          py::arg("bits") = 32);
    m.def("bandwidth_logits", &resources::bandwidth_logits, py::arg("logits"), py::arg("samples"),
          py::arg("bits") = 32);
    m.def("format_bytes", &resources::format_bytes, py::arg("bytes"));

    m.def(
        "prune_report",
        [](const std::string &model, const std::vector<double> &ratios, std::uint64_t seed) {
            py::list rows;
            for (const auto &r : sim::prune_report(nn::model_id_from_string(model), ratios, seed)) {
                py::dict d;
                d["ratio"] = r.ratio;
                d["params"] = r.params;
                d["flops"] = r.flops;
                d["serialized_bytes"] = r.serialized_bytes;
                rows.append(d);
            }
            return rows;
        },
        py::arg("model"), py::arg("ratios"), py::arg("seed") = 0);

    m.def(
        "importance_weights",
        [](const std::vector<std::vector<std::size_t>> &counts) {
            const auto w = fl::compute_importance_weights(counts);
            return py::make_tuple(w.weight, w.covered);
        },
        py::arg("counts"), "counts[client][class] -> (weight[class][client], covered[class])");

    m.def(
        "dirichlet_class_counts",
        [](std::size_t classes, std::size_t per_class, std::size_t clients, double alpha, std::uint64_t seed) {
            const auto ds = data::synth_dataset(data::SynthSpec{classes, per_class, {1}, 1.0, seed, seed, 1});
            std::vector<std::vector<std::size_t>> counts;
            for (const auto &s : data::dirichlet_partition(ds, {clients, alpha, seed, 0})) counts.push_back(data::class_counts(s));
            return counts;
        },
        py::arg("classes"), py::arg("per_class"), py::arg("clients"), py::arg("alpha"), py::arg("seed") = 0);

    m.def(
        "resolve_config",
        [](const std::string &text) { return sim::resolved_config(sim::parse_config_text(text, "<python>")).dump(); },
        py::arg("text"));
    m.def("run_json", &run_json, py::arg("config_text"), py::arg("threads") = 1);
    m.def("run_to_dir", &run_to_dir, py::arg("config_text"), py::arg("out_dir"), py::arg("threads") = 1);
}
