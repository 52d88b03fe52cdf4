// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------
//
// Python bindings. Configs cross the boundary as JSON text; the package wrapper in
// simhaps/__init__.py converts dicts.

#include "simhaps/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace simhaps;

namespace
{
    ScenarioConfig config_from(const std::string &json_text)
    {
        ScenarioConfig c = json_text.empty() ? ScenarioConfig{} : parse_config(json_text);
        c.validate();
        return c;
    }

    py::list rows_to_list(const std::vector<ResultRow> &rows)
    {
        py::list out;
        for (const auto &r : rows)
        {
            py::dict d;
            d["sweep_param"] = r.sweep_param;
            d["sweep_value"] = r.sweep_value;
            d["scheme"] = r.scheme;
            d["metric"] = r.metric;
            d["mean"] = r.mean;
            d["stderr"] = r.standard_error;
            d["trials"] = r.trials;
            d["seed"] = r.seed;
            out.append(d);
        }
        return out;
    }

    // scenario drawn on its own stream so Python callers get reproducible instances per seed
    EEScenario scenario_for(const ScenarioConfig &c, std::uint64_t seed)
    {
        const ChannelModel model = build_channel_model(c);
        Rng rng(derive_seed(seed, 0x7079));
        return draw_ee_scenario(model, c, rng);
    }

    py::dict report_to_dict(const OptimizerReport &r)
    {
        py::dict d;
        d["power"] = r.power;
        d["ee"] = r.ee;
        d["phases"] = r.phases.phases();
        d["ee_trajectory"] = r.ee_trajectory;
        d["ao_iterations"] = r.ao_iterations;
        d["converged"] = r.converged;
        d["power_clamped"] = r.power_clamped;
        d["qos_satisfied"] = r.qos_satisfied;
        d["sum_rate"] = r.rates.sum_rate();
        return d;
    }
} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "SIM-assisted HAPS downlink simulation and energy-efficiency optimization";

    static py::exception<Error> base(m, "SimhapsError", PyExc_RuntimeError);
    static py::exception<Error> config_error(m, "ConfigError", base.ptr());
    static py::exception<Error> infeasible_error(m, "InfeasibleError", base.ptr());
    static py::exception<Error> numerical_error(m, "NumericalError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try
        {
            if (p)
                std::rethrow_exception(p);
        }
        catch (const Error &e)
        {
            switch (e.kind())
            {
            case ErrorKind::config:
            case ErrorKind::domain:
                py::set_error(config_error, e.what());
                break;
            case ErrorKind::infeasible:
                py::set_error(infeasible_error, e.what());
                break;
            default:
                py::set_error(numerical_error, e.what());
            }
        }
    });

    m.def("default_config", [] { return config_to_json(ScenarioConfig{}); }, "Default scenario as JSON text.");
    m.def("normalize_config", [](const std::string &json) { return config_to_json(config_from(json)); },
          py::arg("config_json"), "Parses, validates and re-emits a config with every key filled in.");

    m.def("flops_estimate",
          [](int n, int l, int k, int j) { return flops_estimate(NetworkSpec{n, l, k, j, 5}); }, py::arg("N"),
          py::arg("L"), py::arg("K"), py::arg("J"));
    m.def("outage_gamma", py::overload_cast<double, double, double>(&outage_gamma), py::arg("xi"), py::arg("shape"),
          py::arg("scale"));

    m.def(
        "ee_objective",
        [](const std::string &json, std::uint64_t seed, double power, const RMatrix &phases) {
            const ScenarioConfig c = config_from(json);
            return ee_objective(scenario_for(c, seed), power, PhaseConfig(phases));
        },
        py::arg("config_json"), py::arg("seed"), py::arg("power"), py::arg("phases"),
        "EE in bit/J of an L x N phase matrix at the given transmit power.");

    m.def(
        "optimize",
        [](const std::string &json, std::uint64_t seed, const std::string &scheme) {
            const ScenarioConfig c = config_from(json);
            const EEScenario sc = scenario_for(c, seed);
            Rng rng(derive_seed(seed, 0x7068));
            const PhaseConfig init = PhaseConfig::random(c.num_layers, c.elements_per_layer, rng);
            const Scheme which = parse_scheme(scheme);
            OptimizerReport r;
            {
                py::gil_scoped_release release;
                r = run_scheme(which, sc, init, c.joint_options());
            }
            return report_to_dict(r);
        },
        py::arg("config_json"), py::arg("seed"), py::arg("scheme") = "Joint-AO");

    m.def(
        "run_outage",
        [](const std::string &json) {
            const ScenarioConfig c = config_from(json);
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_outage(c);
            }
            return rows_to_list(rows);
        },
        py::arg("config_json"));

    m.def(
        "run_ee_sweep",
        [](const std::string &json, const std::string &param, const std::vector<double> &values, int trials,
           const std::vector<std::string> &schemes) {
            const ScenarioConfig c = config_from(json);
            SweepSpec spec;
            spec.param = param;
            spec.values = values;
            spec.trials = trials;
            spec.schemes.clear();
            for (const auto &s : schemes)
                spec.schemes.push_back(parse_scheme(s));
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_ee_sweep(c, spec);
            }
            return rows_to_list(rows);
        },
        py::arg("config_json"), py::arg("param"), py::arg("values"), py::arg("trials"), py::arg("schemes"));

    m.def(
        "train_network",
        [](const std::string &json, const std::string &path) {
            const ScenarioConfig c = config_from(json);
            TrainingReport rep;
            {
                py::gil_scoped_release release;
                const Network net = train_network(c, &rep);
                save_model(net, ModelMetadata{c.seed, rep.epochs, rep.final_loss, c.max_power_w}, path);
            }
            py::dict d;
            d["epochs"] = rep.epochs;
            d["early_stopped"] = rep.early_stopped;
            d["final_loss"] = rep.final_loss;
            d["loss_history"] = rep.loss_history;
            return d;
        },
        py::arg("config_json"), py::arg("model_path"), "Trains on the config's training set and writes the model.");

    m.def(
        "evaluate_network",
        [](const std::string &json, const std::string &path) {
            const ScenarioConfig c = config_from(json);
            const Network net = load_model(path);
            std::vector<ResultRow> rows;
            {
                py::gil_scoped_release release;
                rows = evaluate_network(c, net);
            }
            return rows_to_list(rows);
        },
        py::arg("config_json"), py::arg("model_path"));

    m.attr("CSV_HEADER") = kCsvHeader;
}
