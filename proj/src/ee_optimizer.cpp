// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/ee_optimizer.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace simhaps
{
    double PowerModel::circuit_power(int elements_per_layer, int num_layers, int num_users) const
    {
        return elements_per_layer * num_layers * sim_element + num_users * haps_rf + haps_baseband +
               num_users * user_circuit;
    }

    double EEScenario::circuit_power() const
    {
        return problem.power.circuit_power(elements_per_layer(), num_layers(), num_users());
    }

    void EEScenario::validate() const
    {
        const int k = num_users();
        if (k < 1)
            throw Error(ErrorKind::config, "EE scenario needs at least one user");
        if (problem.unicast_rate_threshold.size() != k)
            throw Error(ErrorKind::config, "one unicast rate threshold per user is required");
        if (error_variance.size() != k)
            throw Error(ErrorKind::config, "one error variance per user is required");
        if (!(problem.noise_power > 0.0))
            throw Error(ErrorKind::config, "noise power must be positive");
        if (!(problem.power.pa_efficiency > 0.0 && problem.power.pa_efficiency < 1.0))
            throw Error(ErrorKind::config, "PA efficiency must lie in (0, 1)");
        if (!(csi_error >= 0.0 && csi_error <= 1.0))
            throw Error(ErrorKind::config, "CSI error must lie in [0, 1]");
        if (!(problem.max_power >= 0.0))
            throw Error(ErrorKind::config, "maximum power must be non-negative");
        if (!(problem.penalty >= 0.0))
            throw Error(ErrorKind::config, "penalty must be non-negative");
    }

    namespace
    {
        // C = Θ_L Ψ_L ⋯ Θ_1 Ψ_1 applied right-to-left; cheaper than the full cascade
        CMatrix effective_transfer(const PhaseConfig &phases, const PropagationSet &propagation)
        {
            CMatrix c = phases.layer_diagonal(1).asDiagonal() * propagation.feed;
            for (int l = 2; l <= phases.num_layers(); ++l)
                c = phases.layer_diagonal(l).asDiagonal() * (propagation.layer(l) * c);
            return c;
        }

        constexpr double kLn2 = std::numbers::ln2;
    } // namespace

    LinkSnapshot link_snapshot(const EEScenario &scenario, const PhaseConfig &phases)
    {
        LinkSnapshot s;
        s.effective = effective_transfer(phases, scenario.propagation);
        const auto k = static_cast<Eigen::Index>(scenario.channels.size());
        CMatrix g(k, s.effective.cols());
        s.gains.resize(k);
        for (Eigen::Index i = 0; i < k; ++i)
        {
            g.row(i) = scenario.channels[static_cast<std::size_t>(i)].adjoint() * s.effective;
            s.gains(i) = g.row(i).squaredNorm();
        }
        if (scenario.csi_error > 0.0)
        {
            const Precoder w = zf_precode(g);
            s.beam_energy.resize(k + 1);
            s.beam_energy(0) = (s.effective * w.multicast).squaredNorm();
            for (Eigen::Index r = 0; r < k; ++r)
                s.beam_energy(r + 1) = (s.effective * w.unicast.col(r)).squaredNorm();
        }
        return s;
    }

    LinkRates rates_at(const EEScenario &scenario, const LinkSnapshot &snapshot, double total_power)
    {
        const RVector powers = equal_power_split(std::max(total_power, 0.0), scenario.num_users());
        if (scenario.csi_error > 0.0)
            return sinr_rates_imperfect(snapshot.gains, powers, scenario.problem.noise_power, scenario.csi_error,
                                        scenario.error_variance, snapshot.beam_energy);
        return sinr_rates(snapshot.gains, powers, scenario.problem.noise_power);
    }

    double ee_value(const EEScenario &scenario, const LinkSnapshot &snapshot, double total_power)
    {
        const LinkRates r = rates_at(scenario, snapshot, total_power);
        const auto &pm = scenario.problem.power;
        return pm.bandwidth * r.sum_rate() / (total_power / pm.pa_efficiency + scenario.circuit_power());
    }

    double ee_objective(const EEScenario &scenario, double total_power, const PhaseConfig &phases)
    {
        return ee_value(scenario, link_snapshot(scenario, phases), total_power);
    }

    PowerBounds min_power_bounds(const EEScenario &scenario, const LinkSnapshot &snapshot)
    {
        const auto &prob = scenario.problem;
        const int k = scenario.num_users();
        const double r0 = prob.multicast_rate_threshold;
        if (r0 > 1.0)
            throw Error(ErrorKind::infeasible, "multicast rate threshold above 1 bit/s/Hz is never achievable");

        const double eps2 = scenario.csi_error * scenario.csi_error;
        const double scale = 1.0 - eps2;
        const double leakage = eps2 > 0.0 ? snapshot.beam_energy.sum() : 0.0;
        const double gamma0 = std::exp2(r0) - 1.0;

        PowerBounds b;
        for (int i = 0; i < k; ++i)
        {
            const double g = snapshot.gains(i);
            const double err = eps2 > 0.0 ? scenario.error_variance(i) * leakage : 0.0;

            const double gamma_u = std::exp2(prob.unicast_rate_threshold(i)) - 1.0;
            if (gamma_u > 0.0)
            {
                const double den = scale * g - eps2 * err * gamma_u;
                if (!(den > 0.0))
                    throw Error(ErrorKind::infeasible, "unicast threshold unreachable for user " + std::to_string(i + 1));
                b.unicast = std::max(b.unicast, (k + 1) * gamma_u * prob.noise_power / den);
            }
            if (gamma0 > 0.0)
            {
                const double den = scale * g * (2.0 - std::exp2(r0)) - eps2 * err * gamma0;
                if (!(den > 0.0))
                    throw Error(ErrorKind::infeasible,
                                "multicast threshold unreachable for user " + std::to_string(i + 1));
                b.multicast = std::max(b.multicast, (k + 1) * gamma0 * prob.noise_power / den);
            }
        }
        b.minimum = std::max(b.unicast, b.multicast);
        return b;
    }

    PowerSearchResult optimize_power(const EEScenario &scenario, const LinkSnapshot &snapshot,
                                     const PowerBounds &bounds, const PowerSearchOptions &options)
    {
        const double p_max = scenario.problem.max_power;
        if (!(bounds.minimum <= p_max))
            throw Error(ErrorKind::infeasible, "minimum power for the rate thresholds exceeds P_max");

        const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
        double lower = bounds.minimum;
        double upper = p_max;
        double width = upper - lower;
        const double stop_width = options.relative_tolerance * width;

        double right = lower + ratio * width; // ς_1
        double left = upper - ratio * width;  // ς_2
        double ee_right = ee_value(scenario, snapshot, right);
        double ee_left = ee_value(scenario, snapshot, left);

        PowerSearchResult res;
        while (res.iterations < options.max_iterations && width > stop_width)
        {
            if (ee_right < ee_left)
            {
                upper = right;
                right = left;
                ee_right = ee_left;
                width *= ratio;
                left = upper - ratio * width;
                ee_left = ee_value(scenario, snapshot, left);
            }
            else
            {
                lower = left;
                left = right;
                ee_left = ee_right;
                width *= ratio;
                right = lower + ratio * width;
                ee_right = ee_value(scenario, snapshot, right);
            }
            ++res.iterations;
        }
        res.lower = lower;
        res.upper = upper;
        res.power = 0.5 * (lower + upper);
        res.ee = ee_value(scenario, snapshot, res.power);
        return res;
    }

    namespace
    {
        double penalty_terms(const EEScenario &scenario, const LinkRates &r)
        {
            const auto &prob = scenario.problem;
            double violation = std::max(0.0, prob.multicast_rate_threshold - r.multicast_rate);
            for (Eigen::Index i = 0; i < r.unicast_rates.size(); ++i)
                violation += std::max(0.0, prob.unicast_rate_threshold(i) - r.unicast_rates(i));
            return violation;
        }

        double penalized_value(const EEScenario &scenario, const LinkSnapshot &snapshot, double total_power,
                               double penalty)
        {
            const LinkRates r = rates_at(scenario, snapshot, total_power);
            return r.sum_rate() - penalty * penalty_terms(scenario, r);
        }

        RMatrix assemble_penalized_gradient(const EEScenario &scenario, const RateSensitivity &s, double penalty)
        {
            const auto &prob = scenario.problem;
            const double w0 = 1.0 + (s.rates.multicast_rate < prob.multicast_rate_threshold ? penalty : 0.0);
            RMatrix grad = w0 * s.multicast_dphase;
            for (std::size_t i = 0; i < s.unicast_dphase.size(); ++i)
            {
                const auto idx = static_cast<Eigen::Index>(i);
                const double wk = 1.0 + (s.rates.unicast_rates(idx) < prob.unicast_rate_threshold(idx) ? penalty : 0.0);
                grad += wk * s.unicast_dphase[i];
            }
            return grad;
        }
    } // namespace

    double penalized_sum_rate(const EEScenario &scenario, double total_power, const PhaseConfig &phases, double penalty)
    {
        return penalized_value(scenario, link_snapshot(scenario, phases), total_power, penalty);
    }

    RateSensitivity rate_sensitivity(const EEScenario &scenario, const PhaseConfig &phases, const LinkSnapshot &snapshot,
                                     double total_power)
    {
        const int k = scenario.num_users();
        const double n0 = scenario.problem.noise_power;
        const double p = std::max(total_power, 0.0) / (k + 1);
        const double eps2 = scenario.csi_error * scenario.csi_error;
        const double scale = 1.0 - eps2;
        const double beam = eps2 > 0.0 ? snapshot.beam_energy.sum() : 0.0;

        RateSensitivity s;
        s.rates = rates_at(scenario, snapshot, total_power);
        s.unicast_dpower.resize(k);

        const Cascade c = cascade(phases, scenario.propagation);
        std::vector<RMatrix> gain_grad(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i)
            gain_grad[static_cast<std::size_t>(i)] =
                grad_gain_all(c, scenario.propagation, scenario.channels[static_cast<std::size_t>(i)]);

        // leakage per unit stream power: ε²σ²_k Σ_r ‖Cw̄_r‖²
        auto leak_rate = [&](int i) { return eps2 > 0.0 ? eps2 * scenario.error_variance(i) * beam : 0.0; };

        for (int i = 0; i < k; ++i)
        {
            const double g = scale * snapshot.gains(i);
            const double a = leak_rate(i);
            const double den = a * p + n0;
            const double gamma_u = s.rates.sinr_unicast(i);
            const double common = 1.0 / (kLn2 * (1.0 + gamma_u));
            s.unicast_dpower(i) = common * g * n0 / (den * den) / (k + 1);
            s.unicast_dphase.push_back(common * (scale * p / den) * gain_grad[static_cast<std::size_t>(i)]);
        }

        const int kw = s.rates.weakest_user;
        const double g = scale * snapshot.gains(kw);
        const double a = leak_rate(kw);
        const double den = (g + a) * p + n0;
        const double common = 1.0 / (kLn2 * (1.0 + s.rates.sinr_multicast(kw)));
        s.multicast_dpower = common * g * n0 / (den * den) / (k + 1);
        s.multicast_dphase =
            common * (scale * p * (a * p + n0) / (den * den)) * gain_grad[static_cast<std::size_t>(kw)];
        return s;
    }

    RMatrix grad_penalized_sum_rate(const EEScenario &scenario, double total_power, const PhaseConfig &phases,
                                    double penalty)
    {
        const LinkSnapshot snap = link_snapshot(scenario, phases);
        return assemble_penalized_gradient(scenario, rate_sensitivity(scenario, phases, snap, total_power), penalty);
    }

    PhaseSearchResult optimize_phases(const EEScenario &scenario, double total_power, const PhaseConfig &initial,
                                      double penalty, const PhaseSearchOptions &options)
    {
        PhaseSearchResult res;
        res.phases = initial;
        LinkSnapshot snap = link_snapshot(scenario, res.phases);
        double value = penalized_value(scenario, snap, total_power, penalty);
        res.objective.push_back(value);

        while (res.iterations < options.max_iterations)
        {
            const RMatrix grad = assemble_penalized_gradient(
                scenario, rate_sensitivity(scenario, res.phases, snap, total_power), penalty);
            const double slope = grad.squaredNorm();
            if (!(slope > 0.0))
            {
                res.converged = true;
                break;
            }

            double step = options.initial_step;
            bool accepted = false;
            PhaseConfig candidate;
            LinkSnapshot cand_snap;
            double cand_value = value;
            for (int b = 0; b <= options.max_backtracks; ++b, step *= options.shrink)
            {
                candidate = PhaseConfig(res.phases.phases() + step * grad);
                cand_snap = link_snapshot(scenario, candidate);
                cand_value = penalized_value(scenario, cand_snap, total_power, penalty);
                if (cand_value >= value + options.sufficient_increase * step * slope)
                {
                    accepted = true;
                    break;
                }
            }
            if (!accepted)
            {
                res.stagnated = true;
                break;
            }

            const double change = cand_value - value;
            res.phases = std::move(candidate);
            snap = std::move(cand_snap);
            value = cand_value;
            res.objective.push_back(value);
            ++res.iterations;
            if (std::abs(change) < options.tolerance * std::max(std::abs(value), 1e-12))
            {
                res.converged = true;
                break;
            }
        }
        return res;
    }

    namespace
    {
        bool qos_met(const EEScenario &scenario, const LinkRates &r)
        {
            const auto &prob = scenario.problem;
            if (r.multicast_rate < prob.multicast_rate_threshold)
                return false;
            for (Eigen::Index i = 0; i < r.unicast_rates.size(); ++i)
                if (r.unicast_rates(i) < prob.unicast_rate_threshold(i))
                    return false;
            return true;
        }
    } // namespace

    OptimizerReport optimize_joint(const EEScenario &scenario, const PhaseConfig &initial, const JointOptions &options)
    {
        scenario.validate();
        const double p_max = scenario.problem.max_power;

        OptimizerReport rep;
        rep.phases = initial;
        rep.power = p_max;
        bool have_power = false;

        for (int it = 1; it <= options.max_iterations; ++it)
        {
            LinkSnapshot snap = link_snapshot(scenario, rep.phases);
            if (options.optimize_power)
            {
                const PowerBounds bounds = min_power_bounds(scenario, snap);
                const bool feasible = bounds.minimum <= p_max;

                if (feasible)
                {
                    const PowerSearchResult ps = optimize_power(scenario, snap, bounds, options.power);
                    rep.power_iterations += ps.iterations;
                    // golden section is only accurate to its bracket; never step away from a better feasible power
                    if (!have_power || rep.power < bounds.minimum ||
                        ps.ee >= ee_value(scenario, snap, rep.power))
                        rep.power = ps.power;
                }
                else
                {
                    rep.power = p_max;
                    rep.power_clamped = true;
                }
                have_power = true;
            }

            if (options.optimize_phases)
            {
                const PhaseSearchResult ph =
                    optimize_phases(scenario, rep.power, rep.phases, scenario.problem.penalty, options.phase);
                rep.phase_iterations += ph.iterations;
                rep.phases = ph.phases;
                snap = link_snapshot(scenario, rep.phases);
            }

            const double ee = ee_value(scenario, snap, rep.power);
            rep.ee_trajectory.push_back(ee);
            rep.ao_iterations = it;
            if (it > 1)
            {
                const double prev = rep.ee_trajectory[rep.ee_trajectory.size() - 2];
                if (std::abs(ee - prev) < options.tolerance * std::max(std::abs(ee), 1e-300))
                {
                    rep.converged = true;
                    break;
                }
            }
            if (!options.optimize_phases && !options.optimize_power)
                break;
        }

        const LinkSnapshot snap = link_snapshot(scenario, rep.phases);
        rep.ee = ee_value(scenario, snap, rep.power);
        rep.rates = rates_at(scenario, snap, rep.power);
        rep.qos_satisfied = qos_met(scenario, rep.rates);
        return rep;
    }

    std::string scheme_name(Scheme scheme)
    {
        switch (scheme)
        {
        case Scheme::joint_ao:
            return "Joint-AO";
        case Scheme::joint_udnn:
            return "Joint-uDNN";
        case Scheme::power_opt:
            return "Power-Opt";
        case Scheme::phase_opt:
            return "Phase-Opt";
        case Scheme::non_opt:
            return "Non-Opt";
        }
        return "unknown";
    }

    Scheme parse_scheme(const std::string &name)
    {
        for (Scheme s : {Scheme::joint_ao, Scheme::joint_udnn, Scheme::power_opt, Scheme::phase_opt, Scheme::non_opt})
            if (scheme_name(s) == name)
                return s;
        throw Error(ErrorKind::config, "unknown scheme '" + name + "'");
    }

    OptimizerReport run_scheme(Scheme scheme, const EEScenario &scenario, const PhaseConfig &initial,
                               const JointOptions &options)
    {
        const PhaseConfig fixed = PhaseConfig::constant(scenario.num_layers(), scenario.elements_per_layer(), kPi);
        JointOptions opts = options;
        switch (scheme)
        {
        case Scheme::joint_ao:
            return optimize_joint(scenario, initial, opts);
        case Scheme::power_opt:
            opts.optimize_phases = false;
            opts.max_iterations = 1;
            return optimize_joint(scenario, fixed, opts);
        case Scheme::phase_opt:
            opts.optimize_power = false;
            return optimize_joint(scenario, initial, opts);
        case Scheme::non_opt:
            opts.optimize_power = false;
            opts.optimize_phases = false;
            opts.max_iterations = 1;
            return optimize_joint(scenario, fixed, opts);
        case Scheme::joint_udnn:
            break;
        }
        throw Error(ErrorKind::config, "Joint-uDNN needs a trained network; use the neural optimizer");
    }

} // namespace simhaps
