// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------
//
// Command-line front end. Exit codes: 0 success, 1 config error, 2 numerical failure,
// 3 infeasible scenario.

#include "simhaps/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

namespace
{
    using namespace simhaps;

    struct CommonOptions
    {
        std::string config_path;
        std::optional<std::uint64_t> seed;
        std::string out = "-";
        std::string format = "csv";
        std::vector<std::string> overrides;
    };

    void add_common(CLI::App *cmd, CommonOptions &o)
    {
        cmd->add_option("--config", o.config_path, "Scenario JSON (reference defaults when omitted)");
        cmd->add_option("--seed", o.seed, "Master seed (overrides the config)");
        cmd->add_option("--out", o.out, "Output path, '-' for stdout");
        cmd->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        cmd->add_option("--set", o.overrides, "Config override key=value (repeatable)");
    }

    ScenarioConfig resolve(const CommonOptions &o)
    {
        ScenarioConfig c = o.config_path.empty() ? ScenarioConfig{} : load_config(o.config_path);
        for (const auto &s : o.overrides)
            apply_override(c, s);
        if (o.seed)
            c.seed = *o.seed;
        c.validate();
        return c;
    }

    std::vector<double> parse_values(const std::string &text)
    {
        std::vector<double> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            try
            {
                std::size_t used = 0;
                out.push_back(std::stod(item, &used));
                if (used != item.size())
                    throw std::invalid_argument(item);
            }
            catch (const std::logic_error &)
            {
                throw Error(ErrorKind::config, "bad sweep value '" + item + "'");
            }
        }
        return out;
    }

    std::vector<std::pair<int, int>> parse_grid(const std::string &text)
    {
        std::vector<std::pair<int, int>> grid;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            const auto x = item.find('x');
            if (x == std::string::npos)
                throw Error(ErrorKind::config, "timing grid entries look like LxN, got '" + item + "'");
            try
            {
                grid.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
            }
            catch (const std::logic_error &)
            {
                throw Error(ErrorKind::config, "bad timing grid entry '" + item + "'");
            }
        }
        return grid;
    }

    std::vector<Scheme> parse_schemes(const std::string &text)
    {
        std::vector<Scheme> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(parse_scheme(item));
        return out;
    }

    int run(int argc, char **argv)
    {
        CLI::App app{"SIM-assisted HAPS downlink simulator and EE optimizer"};
        app.require_subcommand(1);

        CommonOptions outage_opt, sweep_opt, train_opt, eval_opt, timing_opt;

        auto *outage = app.add_subcommand("outage", "Outage probability: gamma, saddlepoint and Monte Carlo");
        add_common(outage, outage_opt);
        std::optional<long> mc_trials;
        outage->add_option("--trials", mc_trials, "Monte Carlo trials per power point");

        auto *sweep = app.add_subcommand("ee-sweep", "Energy efficiency of the optimization schemes over a parameter");
        add_common(sweep, sweep_opt);
        std::string param = "L";
        std::string values = "1,2,3,4,5,6";
        std::string schemes = "Joint-AO,Power-Opt,Phase-Opt,Non-Opt";
        std::optional<int> sweep_trials;
        std::string sweep_model;
        sweep->add_option("--param", param, "L, N, P_max, K, kappa, epsilon or P");
        sweep->add_option("--values", values, "Comma-separated sweep values");
        sweep->add_option("--schemes", schemes, "Comma-separated scheme names");
        sweep->add_option("--trials", sweep_trials, "Channel realizations per point");
        sweep->add_option("--model", sweep_model, "Trained network for Joint-uDNN");

        auto *train_cmd = app.add_subcommand("dnn-train", "Train the unsupervised network; --out receives the model");
        add_common(train_cmd, train_opt);
        std::string history;
        train_cmd->add_option("--history", history, "Write the per-epoch loss history here");

        auto *eval_cmd = app.add_subcommand("dnn-eval", "Compare a trained network with Joint-AO on the test set");
        add_common(eval_cmd, eval_opt);
        std::string eval_model;
        eval_cmd->add_option("--model", eval_model, "Model file from dnn-train")->required();

        auto *timing = app.add_subcommand("timing", "Per-solve runtime of Joint-AO and Joint-uDNN");
        add_common(timing, timing_opt);
        std::string grid = "3x9,2x25,5x25,3x49";
        std::string timing_model;
        timing->add_option("--grid", grid, "Comma-separated LxN points");
        timing->add_option("--model", timing_model, "Trained network (untrained weights are timed otherwise)");

        try
        {
            app.parse(argc, argv);
        }
        catch (const CLI::ParseError &e)
        {
            const int rc = app.exit(e);
            return rc == 0 ? 0 : 1;
        }

        if (outage->parsed())
        {
            ScenarioConfig c = resolve(outage_opt);
            if (mc_trials)
                c.outage_montecarlo_trials = *mc_trials;
            c.validate();
            emit_results(run_outage(c), parse_format(outage_opt.format), outage_opt.out);
        }
        else if (sweep->parsed())
        {
            const ScenarioConfig c = resolve(sweep_opt);
            SweepSpec spec;
            spec.param = param;
            spec.values = parse_values(values);
            spec.trials = sweep_trials.value_or(c.trials);
            spec.schemes = parse_schemes(schemes);
            std::optional<Network> model;
            if (!sweep_model.empty())
                model = load_model(sweep_model);
            const auto rows = run_ee_sweep(c, spec, network_provider(model ? &*model : nullptr));
            emit_results(rows, parse_format(sweep_opt.format), sweep_opt.out);
            const bool any_feasible = std::any_of(rows.begin(), rows.end(), [](const ResultRow &r)
                                                  { return r.metric == "infeasible" && r.mean < 1.0; });
            if (!any_feasible)
                throw Error(ErrorKind::infeasible, "no trial of any requested scheme met the rate thresholds");
        }
        else if (train_cmd->parsed())
        {
            const ScenarioConfig c = resolve(train_opt);
            if (train_opt.out == "-")
                throw Error(ErrorKind::config, "dnn-train needs --out for the model file");
            TrainingReport rep;
            const Network net = train_network(c, &rep);
            save_model(net, ModelMetadata{c.seed, rep.epochs, rep.final_loss, c.max_power_w}, train_opt.out);
            if (!history.empty())
            {
                std::vector<ResultRow> rows;
                for (std::size_t e = 0; e < rep.loss_history.size(); ++e)
                    rows.push_back(ResultRow{"epoch", static_cast<double>(e + 1), "Joint-uDNN", "loss",
                                             rep.loss_history[e], 0.0, c.train_samples, c.seed});
                emit_results(rows, parse_format(train_opt.format), history);
            }
            std::fprintf(stderr, "trained %d epochs, final loss %.6g%s\n", rep.epochs, rep.final_loss,
                         rep.early_stopped ? " (plateau)" : "");
        }
        else if (eval_cmd->parsed())
        {
            const ScenarioConfig c = resolve(eval_opt);
            const Network net = load_model(eval_model);
            emit_results(evaluate_network(c, net), parse_format(eval_opt.format), eval_opt.out);
        }
        else if (timing->parsed())
        {
            const ScenarioConfig c = resolve(timing_opt);
            std::optional<Network> model;
            if (!timing_model.empty())
                model = load_model(timing_model);
            emit_results(run_timing(c, parse_grid(grid), model ? &*model : nullptr), parse_format(timing_opt.format),
                         timing_opt.out);
        }
        return 0;
    }
} // namespace

int main(int argc, char **argv)
{
    try
    {
        return run(argc, argv);
    }
    catch (const simhaps::Error &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return simhaps::exit_code(e.kind());
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
