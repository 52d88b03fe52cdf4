// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/beamforming.hpp"

#include <string>
#include <vector>

namespace simhaps
{
    /// Circuit and amplifier power model; all values in watts.
    struct PowerModel
    {
        double bandwidth = 20e6;     // W_B [Hz]
        double pa_efficiency = 0.85; // η
        double sim_element = 0.01;   // P_SIM per meta-atom
        double haps_rf = 1.0;        // P_HAPS,RF per RF chain
        double haps_baseband = 10.0; // P_HAPS,BB
        double user_circuit = 0.01;  // P_c,User per ground user

        /// P_c = N·L·P_SIM + K·P_RF + P_BB + K·P_user
        double circuit_power(int elements_per_layer, int num_layers, int num_users) const;
    };

    struct EEProblem
    {
        PowerModel power;
        RVector unicast_rate_threshold; // R_k^th [bit/s/Hz]
        double multicast_rate_threshold = 0.0;
        double max_power = 20.0; // P_max [W]
        double penalty = 100.0;  // ρ
        double noise_power = 0.0; // N_0 [W]
    };

    /// Channels and constraints for one EE problem instance. `channels` are the design
    /// channels (the estimates h̃_k when csi_error > 0).
    struct EEScenario
    {
        PropagationSet propagation;
        std::vector<CVector> channels;
        RVector error_variance; // σ²_{e,k}
        double csi_error = 0.0; // ε
        EEProblem problem;

        int num_users() const { return static_cast<int>(channels.size()); }
        int num_layers() const { return propagation.num_layers(); }
        int elements_per_layer() const { return static_cast<int>(propagation.feed.rows()); }
        double circuit_power() const;
        void validate() const;
    };

    /// Phase-dependent quantities that stay fixed while the power is varied.
    struct LinkSnapshot
    {
        CMatrix effective;   // C = BΨ_1
        RVector gains;       // ‖g_k‖²
        RVector beam_energy; // ‖Cw̄_r‖², r = 0..K; empty under perfect CSI
    };

    LinkSnapshot link_snapshot(const EEScenario &scenario, const PhaseConfig &phases);

    /// Rates under equal power split P/(K+1); imperfect-CSI SINRs when ε > 0.
    LinkRates rates_at(const EEScenario &scenario, const LinkSnapshot &snapshot, double total_power);

    /// EE = W_B Σ_{k=0}^K R_k / (P/η + P_c)  [bit/J]
    double ee_value(const EEScenario &scenario, const LinkSnapshot &snapshot, double total_power);
    double ee_objective(const EEScenario &scenario, double total_power, const PhaseConfig &phases);

    struct PowerBounds
    {
        double unicast = 0.0;
        double multicast = 0.0;
        double minimum = 0.0; // max of the two
    };

    /// Minimum total power meeting every rate threshold at the given phases.
    /// Throws infeasible when R_0^th > 1 or, under CSI error, when a denominator is non-positive.
    PowerBounds min_power_bounds(const EEScenario &scenario, const LinkSnapshot &snapshot);

    struct PowerSearchOptions
    {
        int max_iterations = 60;          // I_PA
        double relative_tolerance = 1e-9; // stop once the bracket is below this fraction of P_max - P_min
    };

    struct PowerSearchResult
    {
        double power = 0.0; // (p_l + p_u)/2
        double ee = 0.0;
        double lower = 0.0;
        double upper = 0.0;
        int iterations = 0;
    };

    /// Golden-section search of the quasi-concave EE(P) over [P_min, P_max].
    PowerSearchResult optimize_power(const EEScenario &scenario, const LinkSnapshot &snapshot,
                                     const PowerBounds &bounds, const PowerSearchOptions &options = {});

    /// Σ_{k=0}^K R_k - ρ Σ_{k=0}^K max(0, R_k^th - R_k)
    double penalized_sum_rate(const EEScenario &scenario, double total_power, const PhaseConfig &phases, double penalty);

    /// Rates with their derivatives w.r.t. the total power and every phase.
    /// Under CSI error the leakage term is held fixed when differentiating w.r.t. phases.
    struct RateSensitivity
    {
        LinkRates rates;
        RVector unicast_dpower;               // ∂R_k/∂P
        double multicast_dpower = 0.0;        // ∂R_0/∂P through the weakest user k'
        std::vector<RMatrix> unicast_dphase;  // ∂R_k/∂θ (L×N each)
        RMatrix multicast_dphase;             // ∂R_0/∂θ
    };

    RateSensitivity rate_sensitivity(const EEScenario &scenario, const PhaseConfig &phases, const LinkSnapshot &snapshot,
                                     double total_power);

    /// (1+ρ_0)∂R_0/∂θ + Σ_k (1+ρ_k)∂R_k/∂θ with ρ_k = ρ iff R_k < R_k^th.
    RMatrix grad_penalized_sum_rate(const EEScenario &scenario, double total_power, const PhaseConfig &phases,
                                    double penalty);

    struct PhaseSearchOptions
    {
        int max_iterations = 100;     // I_PS
        double tolerance = 1e-4;      // relative change of the penalized objective
        double initial_step = 1.0;
        double shrink = 0.5;
        double sufficient_increase = 1e-4;
        int max_backtracks = 30;
    };

    struct PhaseSearchResult
    {
        PhaseConfig phases;
        std::vector<double> objective; // penalized objective after each accepted step (index 0 = start)
        int iterations = 0;
        bool converged = false;
        bool stagnated = false; // line search found no admissible step
    };

    /// Projected gradient ascent with Armijo backtracking on the penalized sum rate.
    PhaseSearchResult optimize_phases(const EEScenario &scenario, double total_power, const PhaseConfig &initial,
                                      double penalty, const PhaseSearchOptions &options = {});

    struct JointOptions
    {
        int max_iterations = 50; // I_AO
        double tolerance = 1e-4; // relative EE change
        bool optimize_power = true;
        bool optimize_phases = true;
        PowerSearchOptions power;
        PhaseSearchOptions phase;
    };

    struct OptimizerReport
    {
        double power = 0.0;
        PhaseConfig phases;
        double ee = 0.0;
        std::vector<double> ee_trajectory; // EE after each AO iteration
        int ao_iterations = 0;
        int phase_iterations = 0; // summed over AO iterations
        int power_iterations = 0;
        bool converged = false;
        bool power_clamped = false; // P_min > P_max was hit at some iteration
        bool qos_satisfied = false;
        LinkRates rates;
    };

    /// Alternates golden-section power search and penalized PGA until the EE settles.
    /// P is clamped to P_max while P_min > P_max; errors from min_power_bounds propagate.
    OptimizerReport optimize_joint(const EEScenario &scenario, const PhaseConfig &initial, const JointOptions &options = {});

    enum class Scheme
    {
        joint_ao,
        joint_udnn,
        power_opt,
        phase_opt,
        non_opt
    };

    std::string scheme_name(Scheme scheme);
    Scheme parse_scheme(const std::string &name);

    /// Baselines: fixed phases are all π, fixed power is P_max. Joint-AO starts from `initial`.
    OptimizerReport run_scheme(Scheme scheme, const EEScenario &scenario, const PhaseConfig &initial,
                               const JointOptions &options = {});

} // namespace simhaps
