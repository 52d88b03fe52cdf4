// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace simhaps
{
    using nlohmann::json;

    // ---------- config ----------

    double ScenarioConfig::wavelength() const { return kSpeedOfLight / carrier_frequency_hz; }

    double ScenarioConfig::noise_power_w() const
    {
        return dbm_to_watt(noise_psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz));
    }

    PowerModel ScenarioConfig::power_model() const
    {
        PowerModel p;
        p.bandwidth = bandwidth_hz;
        p.pa_efficiency = pa_efficiency;
        p.sim_element = dbm_to_watt(sim_element_power_dbm);
        p.haps_rf = dbm_to_watt(haps_rf_power_dbm);
        p.haps_baseband = dbm_to_watt(haps_baseband_power_dbm);
        p.user_circuit = dbm_to_watt(user_circuit_power_dbm);
        return p;
    }

    SimGeometry ScenarioConfig::geometry() const
    {
        const double lam = wavelength();
        return SimGeometry::make(num_layers, elements_per_layer, num_antennas, lam, element_pitch_wavelengths * lam,
                                 element_size_wavelengths * lam, element_size_wavelengths * lam,
                                 sim_thickness_wavelengths * lam);
    }

    UserGeometry ScenarioConfig::user(int index) const
    {
        const auto &p = user_positions_km.at(static_cast<std::size_t>(index));
        const Eigen::Vector3d haps(haps_position_km[0], haps_position_km[1], haps_position_km[2]);
        return UserGeometry::make(haps, Eigen::Vector3d(p[0], p[1], p[2]), wavelength(), db_to_linear(tx_gain_dbi),
                                  db_to_linear(rx_gain_dbi));
    }

    EEProblem ScenarioConfig::problem() const
    {
        EEProblem p;
        p.power = power_model();
        p.unicast_rate_threshold = RVector::Constant(num_users, unicast_rate_threshold_bps_hz);
        p.multicast_rate_threshold = multicast_rate_threshold_bps_hz;
        p.max_power = max_power_w;
        p.penalty = penalty;
        p.noise_power = noise_power_w();
        return p;
    }

    JointOptions ScenarioConfig::joint_options() const
    {
        JointOptions o;
        o.max_iterations = ao_max_iterations;
        o.tolerance = ao_tolerance;
        o.phase.max_iterations = phase_max_iterations;
        o.phase.tolerance = phase_tolerance;
        o.power.max_iterations = power_max_iterations;
        o.power.relative_tolerance = power_bracket_tolerance;
        return o;
    }

    TrainerConfig ScenarioConfig::trainer_config() const
    {
        TrainerConfig t;
        t.learning_rate = learning_rate;
        t.batch_size = batch_size;
        t.max_epochs = max_epochs;
        t.patience = patience_epochs;
        t.plateau_tolerance = plateau_tolerance;
        t.penalty = penalty;
        t.seed = seed;
        return t;
    }

    NetworkSpec ScenarioConfig::network_spec() const
    {
        return NetworkSpec{elements_per_layer, num_layers, num_users, hidden_width, hidden_layers};
    }

    namespace
    {
        void require(bool ok, const std::string &what)
        {
            if (!ok)
                throw Error(ErrorKind::config, what);
        }
    } // namespace

    void ScenarioConfig::validate() const
    {
        require(carrier_frequency_hz > 0.0, "carrier_frequency_hz must be positive");
        require(bandwidth_hz > 0.0, "bandwidth_hz must be positive");
        require(pa_efficiency > 0.0 && pa_efficiency < 1.0, "pa_efficiency must lie in (0, 1)");
        require(std::isfinite(noise_psd_dbm_per_hz), "noise_psd_dbm_per_hz must be finite");
        require(haps_position_km.size() == 3, "haps_position_km needs three coordinates");
        for (const auto &p : user_positions_km)
            require(p.size() == 3, "every entry of user_positions_km needs three coordinates");
        require(num_users >= 1, "num_users must be at least 1");
        require(static_cast<std::size_t>(num_users) <= user_positions_km.size(),
                "num_users exceeds the number of user_positions_km entries");
        require(num_antennas >= num_users + 1, "num_antennas must be at least num_users + 1");
        require(num_layers >= 1, "num_layers must be at least 1");
        const int side = static_cast<int>(std::lround(std::sqrt(elements_per_layer)));
        require(elements_per_layer >= 1 && side * side == elements_per_layer, "elements_per_layer must be a perfect square");
        require(element_pitch_wavelengths > 0.0 && element_size_wavelengths > 0.0 && sim_thickness_wavelengths > 0.0,
                "SIM spacings must be positive");
        require(rician_factor >= 0.0, "rician_factor must be non-negative");
        require(csi_error >= 0.0 && csi_error <= 1.0, "csi_error must lie in [0, 1]");
        require(unicast_rate_threshold_bps_hz >= 0.0 && multicast_rate_threshold_bps_hz >= 0.0 &&
                    outage_rate_threshold_bps_hz >= 0.0,
                "rate thresholds must be non-negative");
        require(max_power_w > 0.0, "max_power_w must be positive");
        require(penalty >= 0.0, "penalty must be non-negative");
        require(ao_max_iterations >= 1 && phase_max_iterations >= 0 && power_max_iterations >= 0,
                "iteration budgets must be non-negative (AO at least 1)");
        require(ao_tolerance > 0.0 && phase_tolerance > 0.0 && power_bracket_tolerance > 0.0,
                "tolerances must be positive");
        require(!outage_power_grid_w.empty(), "outage_power_grid_w must not be empty");
        for (double p : outage_power_grid_w)
            require(p > 0.0, "outage powers must be positive");
        require(outage_montecarlo_trials >= 1, "outage_montecarlo_trials must be at least 1");
        require(hidden_width >= 1 && hidden_layers >= 1, "network must have hidden layers of positive width");
        require(batch_size >= 2, "batch_size must be at least 2");
        require(max_epochs >= 1 && patience_epochs >= 1, "max_epochs and patience_epochs must be positive");
        require(learning_rate > 0.0, "learning_rate must be positive");
        require(train_samples >= 2 && test_samples >= 1, "need at least 2 training and 1 test sample");
        require(trials >= 1 && timing_solves >= 1, "trials and timing_solves must be positive");
    }

    namespace
    {
        struct Field
        {
            std::function<void(ScenarioConfig &, const json &)> set;
            std::function<json(const ScenarioConfig &)> get;
        };

        template <typename T> Field field(T ScenarioConfig::*member)
        {
            return Field{[member](ScenarioConfig &c, const json &j) { c.*member = j.get<T>(); },
                         [member](const ScenarioConfig &c) { return json(c.*member); }};
        }

        const std::map<std::string, Field> &fields()
        {
            static const std::map<std::string, Field> table = {
                {"carrier_frequency_hz", field(&ScenarioConfig::carrier_frequency_hz)},
                {"bandwidth_hz", field(&ScenarioConfig::bandwidth_hz)},
                {"noise_psd_dbm_per_hz", field(&ScenarioConfig::noise_psd_dbm_per_hz)},
                {"pa_efficiency", field(&ScenarioConfig::pa_efficiency)},
                {"sim_element_power_dbm", field(&ScenarioConfig::sim_element_power_dbm)},
                {"haps_rf_power_dbm", field(&ScenarioConfig::haps_rf_power_dbm)},
                {"haps_baseband_power_dbm", field(&ScenarioConfig::haps_baseband_power_dbm)},
                {"user_circuit_power_dbm", field(&ScenarioConfig::user_circuit_power_dbm)},
                {"tx_gain_dbi", field(&ScenarioConfig::tx_gain_dbi)},
                {"rx_gain_dbi", field(&ScenarioConfig::rx_gain_dbi)},
                {"haps_position_km", field(&ScenarioConfig::haps_position_km)},
                {"user_positions_km", field(&ScenarioConfig::user_positions_km)},
                {"elements_per_layer", field(&ScenarioConfig::elements_per_layer)},
                {"num_layers", field(&ScenarioConfig::num_layers)},
                {"num_antennas", field(&ScenarioConfig::num_antennas)},
                {"element_pitch_wavelengths", field(&ScenarioConfig::element_pitch_wavelengths)},
                {"element_size_wavelengths", field(&ScenarioConfig::element_size_wavelengths)},
                {"sim_thickness_wavelengths", field(&ScenarioConfig::sim_thickness_wavelengths)},
                {"num_users", field(&ScenarioConfig::num_users)},
                {"rician_factor", field(&ScenarioConfig::rician_factor)},
                {"csi_error", field(&ScenarioConfig::csi_error)},
                {"unicast_rate_threshold_bps_hz", field(&ScenarioConfig::unicast_rate_threshold_bps_hz)},
                {"multicast_rate_threshold_bps_hz", field(&ScenarioConfig::multicast_rate_threshold_bps_hz)},
                {"max_power_w", field(&ScenarioConfig::max_power_w)},
                {"penalty", field(&ScenarioConfig::penalty)},
                {"ao_max_iterations", field(&ScenarioConfig::ao_max_iterations)},
                {"ao_tolerance", field(&ScenarioConfig::ao_tolerance)},
                {"phase_max_iterations", field(&ScenarioConfig::phase_max_iterations)},
                {"phase_tolerance", field(&ScenarioConfig::phase_tolerance)},
                {"power_max_iterations", field(&ScenarioConfig::power_max_iterations)},
                {"power_bracket_tolerance", field(&ScenarioConfig::power_bracket_tolerance)},
                {"outage_power_grid_w", field(&ScenarioConfig::outage_power_grid_w)},
                {"outage_rate_threshold_bps_hz", field(&ScenarioConfig::outage_rate_threshold_bps_hz)},
                {"outage_montecarlo_trials", field(&ScenarioConfig::outage_montecarlo_trials)},
                {"hidden_width", field(&ScenarioConfig::hidden_width)},
                {"hidden_layers", field(&ScenarioConfig::hidden_layers)},
                {"batch_size", field(&ScenarioConfig::batch_size)},
                {"max_epochs", field(&ScenarioConfig::max_epochs)},
                {"learning_rate", field(&ScenarioConfig::learning_rate)},
                {"patience_epochs", field(&ScenarioConfig::patience_epochs)},
                {"plateau_tolerance", field(&ScenarioConfig::plateau_tolerance)},
                {"train_samples", field(&ScenarioConfig::train_samples)},
                {"test_samples", field(&ScenarioConfig::test_samples)},
                {"seed", field(&ScenarioConfig::seed)},
                {"trials", field(&ScenarioConfig::trials)},
                {"timing_solves", field(&ScenarioConfig::timing_solves)},
            };
            return table;
        }

        void set_field(ScenarioConfig &c, const std::string &key, const json &value)
        {
            const auto it = fields().find(key);
            if (it == fields().end())
                throw Error(ErrorKind::config, "unknown config key '" + key + "'");
            try
            {
                it->second.set(c, value);
            }
            catch (const json::exception &e)
            {
                throw Error(ErrorKind::config, "bad value for '" + key + "': " + e.what());
            }
        }
    } // namespace

    ScenarioConfig parse_config(const std::string &json_text)
    {
        json j;
        try
        {
            j = json::parse(json_text);
        }
        catch (const json::exception &e)
        {
            throw Error(ErrorKind::config, std::string("config parse error: ") + e.what());
        }
        if (!j.is_object())
            throw Error(ErrorKind::config, "config must be a JSON object");
        ScenarioConfig c;
        for (const auto &[key, value] : j.items())
            set_field(c, key, value);
        c.validate();
        return c;
    }

    ScenarioConfig load_config(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::config, "cannot open config '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_config(ss.str());
    }

    void apply_override(ScenarioConfig &config, const std::string &assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Error(ErrorKind::config, "override '" + assignment + "' is not of the form key=value");
        const std::string key = assignment.substr(0, eq);
        const std::string text = assignment.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded())
            value = text;
        set_field(config, key, value);
    }

    std::string config_to_json(const ScenarioConfig &config)
    {
        json j = json::object();
        for (const auto &[key, f] : fields())
            j[key] = f.get(config);
        return j.dump(2);
    }

    std::vector<std::string> config_keys()
    {
        std::vector<std::string> keys;
        for (const auto &kv : fields())
            keys.push_back(kv.first);
        return keys;
    }

    // ---------- scenario construction ----------

    ChannelModel build_channel_model(const ScenarioConfig &config)
    {
        config.validate();
        ChannelModel m;
        m.geometry = config.geometry();
        m.propagation = build_propagation_set(m.geometry);
        m.rician_factor = config.rician_factor;
        for (int k = 0; k < config.num_users; ++k)
            m.users.push_back(config.user(k));
        return m;
    }

    namespace
    {
        ChannelSample draw_sample(const ChannelModel &model, const ScenarioConfig &config, Rng &rng)
        {
            ChannelSample s;
            for (const auto &u : model.users)
            {
                UserChannel ch = draw_channel(u, model.geometry, model.propagation, model.rician_factor, rng);
                if (config.csi_error > 0.0)
                    ch = perturb_channel(ch, config.csi_error, rng);
                s.push_back(ch.estimated);
            }
            return s;
        }

        EEScenario base_scenario(const ChannelModel &model, const ScenarioConfig &config)
        {
            EEScenario sc;
            sc.propagation = model.propagation;
            sc.error_variance.resize(model.num_users());
            for (int k = 0; k < model.num_users(); ++k)
                sc.error_variance(k) = model.users[static_cast<std::size_t>(k)].path_loss;
            sc.csi_error = config.csi_error;
            sc.problem = config.problem();
            return sc;
        }
    } // namespace

    EEScenario draw_ee_scenario(const ChannelModel &model, const ScenarioConfig &config, Rng &rng)
    {
        EEScenario sc = base_scenario(model, config);
        sc.channels = draw_sample(model, config, rng);
        return sc;
    }

    std::vector<ChannelSample> draw_channel_samples(const ChannelModel &model, const ScenarioConfig &config, int count,
                                                    std::uint64_t stream)
    {
        std::vector<ChannelSample> out;
        out.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
        {
            Rng rng(derive_seed(config.seed, stream, static_cast<std::uint64_t>(i)));
            out.push_back(draw_sample(model, config, rng));
        }
        return out;
    }

    // ---------- results ----------

    ResultFormat parse_format(const std::string &name)
    {
        if (name == "csv")
            return ResultFormat::csv;
        if (name == "json")
            return ResultFormat::json;
        throw Error(ErrorKind::config, "unknown output format '" + name + "' (expected csv or json)");
    }

    namespace
    {
        std::string fmt_double(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        void check_text(const std::string &s)
        {
            if (s.find_first_of(",\"\n\r") != std::string::npos)
                throw Error(ErrorKind::config, "result field '" + s + "' contains a CSV delimiter");
        }
    } // namespace

    std::string format_results(const std::vector<ResultRow> &rows, ResultFormat format)
    {
        if (rows.empty())
            throw Error(ErrorKind::config, "refusing to emit an empty result set");
        if (format == ResultFormat::json)
        {
            json arr = json::array();
            for (const auto &r : rows)
                arr.push_back({{"sweep_param", r.sweep_param},
                               {"sweep_value", r.sweep_value},
                               {"scheme", r.scheme},
                               {"metric", r.metric},
                               {"mean", r.mean},
                               {"stderr", r.standard_error},
                               {"trials", r.trials},
                               {"seed", r.seed}});
            return arr.dump(2) + "\n";
        }
        std::string out = std::string(kCsvHeader) + "\n";
        for (const auto &r : rows)
        {
            check_text(r.sweep_param);
            check_text(r.scheme);
            check_text(r.metric);
            out += r.sweep_param + "," + fmt_double(r.sweep_value) + "," + r.scheme + "," + r.metric + "," +
                   fmt_double(r.mean) + "," + fmt_double(r.standard_error) + "," + std::to_string(r.trials) + "," +
                   std::to_string(r.seed) + "\n";
        }
        return out;
    }

    void emit_results(const std::vector<ResultRow> &rows, ResultFormat format, const std::string &path)
    {
        const std::string text = format_results(rows, format);
        if (path.empty() || path == "-")
        {
            std::fwrite(text.data(), 1, text.size(), stdout);
            return;
        }
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error(ErrorKind::config, "cannot open '" + path + "' for writing");
        out << text;
        if (!out)
            throw Error(ErrorKind::config, "failed writing '" + path + "'");
    }

    std::vector<ResultRow> parse_results_csv(const std::string &text)
    {
        std::istringstream in(text);
        std::string line;
        if (!std::getline(in, line) || line != kCsvHeader)
            throw Error(ErrorKind::config, "CSV header mismatch");
        std::vector<ResultRow> rows;
        while (std::getline(in, line))
        {
            if (line.empty())
                continue;
            std::vector<std::string> cells;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ','))
                cells.push_back(cell);
            if (cells.size() != 8)
                throw Error(ErrorKind::config, "CSV row has " + std::to_string(cells.size()) + " fields: " + line);
            try
            {
                ResultRow r;
                r.sweep_param = cells[0];
                r.sweep_value = std::stod(cells[1]);
                r.scheme = cells[2];
                r.metric = cells[3];
                r.mean = std::stod(cells[4]);
                r.standard_error = std::stod(cells[5]);
                r.trials = std::stol(cells[6]);
                r.seed = std::stoull(cells[7]);
                rows.push_back(std::move(r));
            }
            catch (const std::logic_error &)
            {
                throw Error(ErrorKind::config, "malformed CSV row: " + line);
            }
        }
        return rows;
    }

    std::pair<double, double> mean_stderr(const std::vector<double> &values)
    {
        if (values.empty())
            return {0.0, 0.0};
        const double n = static_cast<double>(values.size());
        double mean = 0.0;
        for (double v : values)
            mean += v;
        mean /= n;
        if (values.size() < 2)
            return {mean, 0.0};
        double ss = 0.0;
        for (double v : values)
            ss += (v - mean) * (v - mean);
        return {mean, std::sqrt(ss / (n - 1.0) / n)};
    }

    void parallel_for(std::size_t count, const std::function<void(std::size_t)> &fn)
    {
        const std::size_t workers =
            std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
        if (workers <= 1)
        {
            for (std::size_t i = 0; i < count; ++i)
                fn(i);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < count; i = next++)
                    {
                        try
                        {
                            fn(i);
                        }
                        catch (...)
                        {
                            std::lock_guard lock(error_mutex);
                            if (!error)
                                error = std::current_exception();
                            next = count;
                        }
                    }
                });
        }
        if (error)
            std::rethrow_exception(error);
    }

    // ---------- experiments ----------

    namespace
    {
        constexpr std::uint64_t kPhaseStream = 0x7068;
        constexpr std::uint64_t kTrainStream = 0x7472;
        constexpr std::uint64_t kTestStream = 0x7465;
        constexpr std::uint64_t kInitStream = 0x6e6e;
        constexpr std::uint64_t kMonteCarloStream = 0x6d63;

        ResultRow row(const std::string &param, double value, const std::string &scheme, const std::string &metric,
                      double mean, double se, long trials, std::uint64_t seed)
        {
            return ResultRow{param, value, scheme, metric, mean, se, trials, seed};
        }

        double median(std::vector<double> v)
        {
            if (v.empty())
                return 0.0;
            std::sort(v.begin(), v.end());
            const std::size_t n = v.size();
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        }
    } // namespace

    std::vector<ResultRow> run_outage(const ScenarioConfig &config)
    {
        const ChannelModel model = build_channel_model(config);
        const int k = model.num_users();
        Rng rng(derive_seed(config.seed, kPhaseStream, 0));
        const PhaseConfig phases = PhaseConfig::random(config.num_layers, config.elements_per_layer, rng);
        const Cascade c = cascade(phases, model.propagation);
        const CMatrix rc = effective_covariance(c);
        const OutageThresholds thr = OutageThresholds::from_rates(config.outage_rate_threshold_bps_hz, k);
        const double n0 = config.noise_power_w();

        std::vector<GammaFit> fits;
        std::vector<SaddlepointContext> spa;
        for (int i = 0; i < k; ++i)
        {
            const UserStatistics st = user_statistics(model.users[static_cast<std::size_t>(i)], model.geometry,
                                                      model.rician_factor);
            fits.push_back(gamma_moments(st.los_mean, st.nlos_scale, model.propagation.correlation, rc));
            spa.push_back(spa_context(st.los_mean, st.nlos_scale, model.propagation.correlation, rc));
        }

        std::vector<RVector> allocations;
        for (double p : config.outage_power_grid_w)
            allocations.push_back(equal_power_split(p, k));
        const auto mc = outage_montecarlo(model, phases, allocations, thr, n0, config.outage_montecarlo_trials,
                                          derive_seed(config.seed, kMonteCarloStream, 0));

        std::vector<ResultRow> rows;
        for (std::size_t pi = 0; pi < allocations.size(); ++pi)
        {
            const double p = config.outage_power_grid_w[pi];
            for (int i = 0; i < k; ++i)
            {
                const std::string user = "user" + std::to_string(i + 1);
                const double xi = outage_gain_threshold(thr, i, allocations[pi], n0);
                const auto ui = static_cast<std::size_t>(i);
                rows.push_back(row("P", p, user, "OP-gamma", outage_gamma(xi, fits[ui]).probability, 0.0, 1, config.seed));
                rows.push_back(row("P", p, user, "OP-SPA", outage_spa(xi, spa[ui]).probability, 0.0, 1, config.seed));
                rows.push_back(row("P", p, user, "OP-MC", mc[pi].probability(i), mc[pi].standard_error(i),
                                   mc[pi].trials, config.seed));
            }
        }
        return rows;
    }

    void SweepSpec::validate() const
    {
        static const std::vector<std::string> known = {"L", "N", "P_max", "K", "kappa", "epsilon", "P"};
        if (std::find(known.begin(), known.end(), param) == known.end())
            throw Error(ErrorKind::config, "unknown sweep parameter '" + param + "'");
        if (values.empty())
            throw Error(ErrorKind::config, "sweep value list is empty");
        if (trials < 1)
            throw Error(ErrorKind::config, "sweep needs at least one trial per point");
        if (schemes.empty())
            throw Error(ErrorKind::config, "sweep needs at least one scheme");
    }

    void apply_sweep_value(ScenarioConfig &config, const std::string &param, double value)
    {
        auto as_int = [&](const char *what) {
            if (value != std::floor(value))
                throw Error(ErrorKind::config, std::string(what) + " sweep values must be integers");
            return static_cast<int>(value);
        };
        if (param == "L")
            config.num_layers = as_int("L");
        else if (param == "N")
            config.elements_per_layer = as_int("N");
        else if (param == "K")
            config.num_users = as_int("K");
        else if (param == "P_max" || param == "P")
            config.max_power_w = value;
        else if (param == "kappa")
            config.rician_factor = value;
        else if (param == "epsilon")
            config.csi_error = value;
        else
            throw Error(ErrorKind::config, "unknown sweep parameter '" + param + "'");
        config.validate();
    }

    Network train_network(const ScenarioConfig &config, TrainingReport *report)
    {
        const ChannelModel model = build_channel_model(config);
        EEScenario base = base_scenario(model, config);
        const auto data = draw_channel_samples(model, config, config.train_samples, kTrainStream);
        base.channels = data.front();
        Rng rng(derive_seed(config.seed, kInitStream, 0));
        Network net = Network::initialize(config.network_spec(), rng);
        TrainingReport rep = train(net, base, data, config.trainer_config());
        if (report)
            *report = std::move(rep);
        return net;
    }

    NetworkProvider network_provider(const Network *model)
    {
        return [model](const ScenarioConfig &config) {
            const NetworkSpec want = config.network_spec();
            if (model)
            {
                const NetworkSpec &have = model->spec();
                if (have.elements_per_layer == want.elements_per_layer && have.num_layers == want.num_layers &&
                    have.num_users == want.num_users)
                    return *model;
            }
            return train_network(config);
        };
    }

    std::vector<ResultRow> run_ee_sweep(const ScenarioConfig &config, const SweepSpec &sweep,
                                        const NetworkProvider &provider)
    {
        sweep.validate();
        const bool need_network =
            std::find(sweep.schemes.begin(), sweep.schemes.end(), Scheme::joint_udnn) != sweep.schemes.end();
        const NetworkProvider provide = provider ? provider : network_provider(nullptr);

        struct Outcome
        {
            double ee = 0.0, rate = 0.0, iterations = 0.0;
            bool qos = false;
            bool infeasible = false; // optimizer raised an infeasibility error
        };
        const std::size_t ns = sweep.schemes.size();
        const auto trials = static_cast<std::size_t>(sweep.trials);

        std::vector<ResultRow> rows;
        for (std::size_t vi = 0; vi < sweep.values.size(); ++vi)
        {
            ScenarioConfig point = config;
            apply_sweep_value(point, sweep.param, sweep.values[vi]);
            const ChannelModel model = build_channel_model(point);
            const JointOptions opts = point.joint_options();
            Network net;
            if (need_network)
                net = provide(point);

            std::vector<Outcome> out(trials * ns);
            parallel_for(trials, [&](std::size_t t) {
                // common random numbers: trial t uses the same stream at every sweep point
                Rng rng(derive_seed(point.seed, 0x6565, t));
                const EEScenario sc = draw_ee_scenario(model, point, rng);
                const PhaseConfig init = PhaseConfig::random(point.num_layers, point.elements_per_layer, rng);
                for (std::size_t si = 0; si < ns; ++si)
                {
                    Outcome &o = out[t * ns + si];
                    if (sweep.schemes[si] == Scheme::joint_udnn)
                    {
                        const Decision d = net.decide(sc.channels, point.max_power_w);
                        const LinkSnapshot snap = link_snapshot(sc, d.phases);
                        const LinkRates r = rates_at(sc, snap, d.power);
                        o.ee = ee_value(sc, snap, d.power);
                        o.rate = r.sum_rate();
                        o.qos = r.multicast_rate >= sc.problem.multicast_rate_threshold &&
                                (r.unicast_rates.array() >= sc.problem.unicast_rate_threshold.array()).all();
                        continue;
                    }
                    OptimizerReport rep;
                    try
                    {
                        rep = run_scheme(sweep.schemes[si], sc, init, opts);
                    }
                    catch (const Error &e)
                    {
                        if (e.kind() != ErrorKind::infeasible)
                            throw;
                        o.infeasible = true;
                        continue;
                    }
                    o.ee = rep.ee;
                    o.rate = rep.rates.sum_rate();
                    o.iterations = rep.ao_iterations;
                    o.qos = rep.qos_satisfied;
                }
            });

            for (std::size_t si = 0; si < ns; ++si)
            {
                std::vector<double> ee, rate, iters, violation, infeasible;
                for (std::size_t t = 0; t < trials; ++t)
                {
                    const Outcome &o = out[t * ns + si];
                    infeasible.push_back(o.infeasible ? 1.0 : 0.0);
                    if (o.infeasible)
                        continue;
                    ee.push_back(o.ee);
                    rate.push_back(o.rate);
                    iters.push_back(o.iterations);
                    violation.push_back(o.qos ? 0.0 : 1.0);
                }
                const std::string name = scheme_name(sweep.schemes[si]);
                const double v = sweep.values[vi];
                const auto n = static_cast<long>(ee.size());
                if (n > 0)
                {
                    auto [m, s] = mean_stderr(ee);
                    rows.push_back(row(sweep.param, v, name, "EE", m, s, n, config.seed));
                    std::tie(m, s) = mean_stderr(rate);
                    rows.push_back(row(sweep.param, v, name, "rate", m, s, n, config.seed));
                    if (sweep.schemes[si] != Scheme::joint_udnn)
                    {
                        std::tie(m, s) = mean_stderr(iters);
                        rows.push_back(row(sweep.param, v, name, "iterations", m, s, n, config.seed));
                    }
                    std::tie(m, s) = mean_stderr(violation);
                    rows.push_back(row(sweep.param, v, name, "qos-violation", m, s, n, config.seed));
                }
                const auto [m, s] = mean_stderr(infeasible);
                rows.push_back(row(sweep.param, v, name, "infeasible", m, s, sweep.trials, config.seed));
            }
        }
        return rows;
    }

    std::vector<ResultRow> evaluate_network(const ScenarioConfig &config, const Network &network)
    {
        const ChannelModel model = build_channel_model(config);
        const EEScenario base = base_scenario(model, config);
        const auto test = draw_channel_samples(model, config, config.test_samples, kTestStream);
        const JointOptions opts = config.joint_options();

        std::vector<double> nn(test.size()), ao(test.size()), ratio(test.size());
        parallel_for(test.size(), [&](std::size_t i) {
            EEScenario sc = base;
            sc.channels = test[i];
            const Decision d = network.decide(sc.channels, config.max_power_w);
            nn[i] = ee_objective(sc, d.power, d.phases);
            Rng rng(derive_seed(config.seed, kTestStream, 1u << 20, i));
            ao[i] = optimize_joint(sc, PhaseConfig::random(config.num_layers, config.elements_per_layer, rng), opts).ee;
            ratio[i] = ao[i] > 0.0 ? nn[i] / ao[i] : 0.0;
        });

        const long n = static_cast<long>(test.size());
        std::vector<ResultRow> rows;
        for (const auto &[name, v] : {std::pair{std::string("Joint-uDNN"), &nn}, std::pair{std::string("Joint-AO"), &ao}})
        {
            const auto [m, s] = mean_stderr(*v);
            rows.push_back(row("test", 0.0, name, "EE", m, s, n, config.seed));
            rows.push_back(row("test", 0.0, name, "EE-median", median(*v), 0.0, n, config.seed));
        }
        rows.push_back(row("test", 0.0, "Joint-uDNN/Joint-AO", "EE-ratio-median", median(ratio), 0.0, n, config.seed));
        return rows;
    }

    std::vector<ResultRow> run_timing(const ScenarioConfig &config, const std::vector<std::pair<int, int>> &grid,
                                      const Network *model)
    {
        if (grid.empty())
            throw Error(ErrorKind::config, "timing grid is empty");
        using clock = std::chrono::steady_clock;
        std::vector<ResultRow> rows;
        for (std::size_t gi = 0; gi < grid.size(); ++gi)
        {
            ScenarioConfig point = config;
            point.num_layers = grid[gi].first;
            point.elements_per_layer = grid[gi].second;
            point.validate();
            const ChannelModel cm = build_channel_model(point);
            const JointOptions opts = point.joint_options();

            Network net;
            const NetworkSpec want = point.network_spec();
            if (model && model->spec().elements_per_layer == want.elements_per_layer &&
                model->spec().num_layers == want.num_layers && model->spec().num_users == want.num_users)
                net = *model;
            else
            {
                Rng init(derive_seed(point.seed, kInitStream, gi));
                net = Network::initialize(want, init);
            }

            std::vector<double> t_ao, t_nn;
            for (int s = 0; s < point.timing_solves; ++s)
            {
                Rng rng(derive_seed(point.seed, 0x7469, gi, static_cast<std::uint64_t>(s)));
                const EEScenario sc = draw_ee_scenario(cm, point, rng);
                const PhaseConfig init = PhaseConfig::random(point.num_layers, point.elements_per_layer, rng);

                const auto a = clock::now();
                const OptimizerReport rep = optimize_joint(sc, init, opts);
                const auto b = clock::now();
                const Decision d = net.decide(sc.channels, point.max_power_w);
                const auto c = clock::now();
                if (!(rep.ee >= 0.0) || !(d.power >= 0.0))
                    throw Error(ErrorKind::numerical, "timing solve produced an invalid result");
                t_ao.push_back(std::chrono::duration<double>(b - a).count());
                t_nn.push_back(std::chrono::duration<double>(c - b).count());
            }
            const std::string param = "N@L=" + std::to_string(point.num_layers);
            const double v = point.elements_per_layer;
            const long n = point.timing_solves;
            const auto [ma, sa] = mean_stderr(t_ao);
            const auto [mn, sn] = mean_stderr(t_nn);
            rows.push_back(row(param, v, "Joint-AO", "runtime", ma, sa, n, config.seed));
            rows.push_back(row(param, v, "Joint-uDNN", "runtime", mn, sn, n, config.seed));
            rows.push_back(row(param, v, "Joint-AO/Joint-uDNN", "runtime-ratio", ma / mn, 0.0, n, config.seed));
        }
        return rows;
    }

} // namespace simhaps
