// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/neural.hpp"
#include "simhaps/outage.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace simhaps
{
    /// Scenario parameters. Keys carry their unit; dB quantities are converted when derived
    /// values are requested. Defaults describe the reference deployment.
    struct ScenarioConfig
    {
        // link and platform
        double carrier_frequency_hz = 2.1e9;
        double bandwidth_hz = 20e6;
        double noise_psd_dbm_per_hz = -174.0;
        double pa_efficiency = 0.85;
        double sim_element_power_dbm = 10.0;
        double haps_rf_power_dbm = 30.0;
        double haps_baseband_power_dbm = 40.0;
        double user_circuit_power_dbm = 10.0;
        double tx_gain_dbi = 5.0;
        double rx_gain_dbi = 0.0;
        std::vector<double> haps_position_km = {0.0, 0.0, 21.0};
        std::vector<std::vector<double>> user_positions_km = {{2, -3, 0}, {5, -10, 0}, {12, 1, 0}, {4, 25, 0}};

        // SIM
        int elements_per_layer = 25;
        int num_layers = 3;
        int num_antennas = 5;
        double element_pitch_wavelengths = 0.5;
        double element_size_wavelengths = 0.5;
        double sim_thickness_wavelengths = 5.0;

        // channel and users
        int num_users = 4;
        double rician_factor = 4.0; // linear
        double csi_error = 0.0;

        // EE problem
        double unicast_rate_threshold_bps_hz = 0.1;
        double multicast_rate_threshold_bps_hz = 0.1;
        double max_power_w = 20.0;
        double penalty = 100.0;

        // optimizer budgets
        int ao_max_iterations = 50;
        double ao_tolerance = 1e-4;
        int phase_max_iterations = 100;
        double phase_tolerance = 1e-4;
        int power_max_iterations = 60;
        double power_bracket_tolerance = 1e-9;

        // outage study
        std::vector<double> outage_power_grid_w = {1.0, 2.0, 5.0, 10.0};
        double outage_rate_threshold_bps_hz = 0.1;
        long outage_montecarlo_trials = 100000;

        // neural optimizer
        int hidden_width = 256;
        int hidden_layers = 5;
        int batch_size = 50;
        int max_epochs = 2000;
        double learning_rate = 0.01;
        int patience_epochs = 100;
        double plateau_tolerance = 1e-4;
        int train_samples = 5000;
        int test_samples = 500;

        // harness
        std::uint64_t seed = 1;
        int trials = 20;
        int timing_solves = 20;

        double wavelength() const;                 // c / f
        double noise_power_w() const;              // PSD + 10log10(W_B), in watts
        PowerModel power_model() const;
        SimGeometry geometry() const;
        UserGeometry user(int index) const;        // 0-based
        EEProblem problem() const;
        JointOptions joint_options() const;
        TrainerConfig trainer_config() const;
        NetworkSpec network_spec() const;

        /// Throws config error on a range violation.
        void validate() const;
    };

    /// Reads a JSON object of `ScenarioConfig` keys on top of the defaults; unknown keys are rejected.
    ScenarioConfig load_config(const std::string &path);
    ScenarioConfig parse_config(const std::string &json_text);

    /// Applies "key=value" where value is JSON (bare strings are accepted as-is).
    void apply_override(ScenarioConfig &config, const std::string &assignment);

    std::string config_to_json(const ScenarioConfig &config);
    std::vector<std::string> config_keys();

    // ---------- scenario construction ----------

    ChannelModel build_channel_model(const ScenarioConfig &config);

    /// Draws every user's channel; under CSI error the scenario holds the estimates.
    EEScenario draw_ee_scenario(const ChannelModel &model, const ScenarioConfig &config, Rng &rng);

    /// Training or test channels drawn on the given stream.
    std::vector<ChannelSample> draw_channel_samples(const ChannelModel &model, const ScenarioConfig &config, int count,
                                                    std::uint64_t stream);

    // ---------- results ----------

    struct ResultRow
    {
        std::string sweep_param;
        double sweep_value = 0.0;
        std::string scheme;
        std::string metric;
        double mean = 0.0;
        double standard_error = 0.0;
        long trials = 1;
        std::uint64_t seed = 0;

        bool operator==(const ResultRow &) const = default;
    };

    enum class ResultFormat
    {
        csv,
        json
    };

    ResultFormat parse_format(const std::string &name);

    inline constexpr const char *kCsvHeader = "sweep_param,sweep_value,scheme,metric,mean,stderr,trials,seed";

    std::string format_results(const std::vector<ResultRow> &rows, ResultFormat format);

    /// Throws config error on an empty row list without touching `path`.
    void emit_results(const std::vector<ResultRow> &rows, ResultFormat format, const std::string &path);

    std::vector<ResultRow> parse_results_csv(const std::string &text);

    /// Mean and standard error of the mean (0 for a single value).
    std::pair<double, double> mean_stderr(const std::vector<double> &values);

    // ---------- experiments ----------

    /// OP-gamma, OP-SPA and OP-MC rows per user and transmit power, random phases, equal split.
    std::vector<ResultRow> run_outage(const ScenarioConfig &config);

    struct SweepSpec
    {
        std::string param; // L, N, P_max, K, kappa, epsilon, P
        std::vector<double> values;
        int trials = 20;
        std::vector<Scheme> schemes = {Scheme::joint_ao, Scheme::power_opt, Scheme::phase_opt, Scheme::non_opt};

        void validate() const;
    };

    /// Applies one sweep value to a config. "P" fixes the transmit power by setting P_max.
    void apply_sweep_value(ScenarioConfig &config, const std::string &param, double value);

    /// Supplies a network for a sweep point (dimension-matched); called only when Joint-uDNN is requested.
    using NetworkProvider = std::function<Network(const ScenarioConfig &)>;

    /// Default provider: reuses `model` when its spec matches the point, otherwise trains a fresh network.
    NetworkProvider network_provider(const Network *model);

    std::vector<ResultRow> run_ee_sweep(const ScenarioConfig &config, const SweepSpec &sweep,
                                        const NetworkProvider &provider = {});

    /// Trains a network on the config's training set (stream 0x7472).
    Network train_network(const ScenarioConfig &config, TrainingReport *report = nullptr);

    /// Median and mean test-set EE of the network and of Joint-AO on identical channels.
    std::vector<ResultRow> evaluate_network(const ScenarioConfig &config, const Network &network);

    /// Per-solve wall-clock of Joint-AO and Joint-uDNN over `timing_solves` draws per (L, N) point.
    /// Without a dimension-matched network an untrained one of the right shape is timed.
    std::vector<ResultRow> run_timing(const ScenarioConfig &config, const std::vector<std::pair<int, int>> &grid,
                                      const Network *model = nullptr);

    /// Runs fn(i) for i in [0, count) on a small thread pool; rethrows the first exception.
    void parallel_for(std::size_t count, const std::function<void(std::size_t)> &fn);

} // namespace simhaps
