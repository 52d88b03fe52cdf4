// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
// Usage: simhaps_acceptance [criterion numbers...]   (all criteria when none are given)

#include "simhaps/harness.hpp"
#include "simhaps/special.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace simhaps;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    std::string fmt(const char *f, auto... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return buf;
    }

    double row_value(const std::vector<ResultRow> &rows, const std::string &scheme, const std::string &metric, double x)
    {
        for (const auto &r : rows)
            if (r.scheme == scheme && r.metric == metric && r.sweep_value == x)
                return r.mean;
        throw Error(ErrorKind::numerical, "missing row " + scheme + "/" + metric);
    }

    const ResultRow &find_row(const std::vector<ResultRow> &rows, const std::string &scheme, const std::string &metric,
                              double x)
    {
        for (const auto &r : rows)
            if (r.scheme == scheme && r.metric == metric && r.sweep_value == x)
                return r;
        throw Error(ErrorKind::numerical, "missing row " + scheme + "/" + metric);
    }

    // ---------- 1: gamma and saddlepoint outage against Monte Carlo ----------
    Outcome outage_fidelity()
    {
        ScenarioConfig cfg;
        cfg.outage_montecarlo_trials = 1000000;
        const auto rows = run_outage(cfg);
        int compared = 0, bad = 0;
        double worst = 0.0;
        for (const double p : cfg.outage_power_grid_w)
            for (int k = 1; k <= cfg.num_users; ++k)
            {
                const std::string user = "user" + std::to_string(k);
                const ResultRow &mc = find_row(rows, user, "OP-MC", p);
                if (mc.mean < 1e-3 || mc.mean > 0.9)
                    continue;
                const double tol = std::max(0.01, 3.0 * mc.standard_error);
                for (const std::string m : {"OP-gamma", "OP-SPA"})
                {
                    const double gap = std::abs(row_value(rows, user, m, p) - mc.mean);
                    worst = std::max(worst, gap / tol);
                    ++compared;
                    bad += gap > tol;
                }
            }
        return {compared > 0 && bad == 0,
                fmt("%d comparisons in the MC window, %d outside tolerance, worst gap %.3f of tolerance", compared, bad,
                    worst)};
    }

    // ---------- 2: exponential oracle ----------
    Outcome exponential_oracle()
    {
        SaddlepointContext ctx;
        ctx.eigenvalues = RVector::Constant(1, 1.0);
        ctx.noncentrality = RVector::Zero(1);
        double gamma_err = 0.0, spa_err = 0.0;
        for (int i = 0; i <= 490; ++i)
        {
            const double xi = 0.1 + 0.01 * i;
            const double exact = -std::expm1(-xi);
            gamma_err = std::max(gamma_err, std::abs(outage_gamma(xi, 1.0, 1.0) - exact) / exact);
            spa_err = std::max(spa_err, std::abs(outage_spa(xi, ctx).probability - exact));
        }
        return {gamma_err <= 1e-13 && spa_err <= 5e-3,
                fmt("gamma max relative error %.2e, SPA max absolute error %.2e over xi in [0.1, 5]", gamma_err, spa_err)};
    }

    // ---------- 3: moments of the channel gain ----------
    Outcome moment_formulas()
    {
        const ScenarioConfig cfg;
        const ChannelModel model = build_channel_model(cfg);
        double worst_mean = 0.0, worst_var = 0.0;
        for (std::uint64_t g = 1; g <= 5; ++g)
        {
            Rng rng(derive_seed(g, 0x6d6f));
            const PhaseConfig phases = PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng);
            const int k = static_cast<int>((g - 1) % static_cast<std::uint64_t>(cfg.num_users));
            const Cascade c = cascade(phases, model.propagation);
            const UserStatistics st = user_statistics(model.users[static_cast<std::size_t>(k)], model.geometry,
                                                      cfg.rician_factor);
            const GammaFit fit =
                gamma_moments(st.los_mean, st.nlos_scale, model.propagation.correlation, effective_covariance(c));

            const Eigen::RowVectorXcd mean_gain = st.los_mean.adjoint() * c.effective;
            const CMatrix random_gain =
                (st.nlos_scale * model.propagation.correlation_factor.cast<cdouble>()).adjoint() * c.effective;
            ComplexGaussian cn;
            const long draws = 1000000;
            // accumulate relative to the formula mean to keep the variance sum well conditioned
            double s1 = 0.0, s2 = 0.0;
            for (long i = 0; i < draws; ++i)
            {
                const CVector q = cn.vector(cfg.elements_per_layer, rng);
                const double z = (mean_gain + q.adjoint() * random_gain).squaredNorm() - fit.mean;
                s1 += z;
                s2 += z * z;
            }
            const double dm = s1 / draws;
            const double mean = fit.mean + dm;
            const double var = (s2 / draws - dm * dm) * draws / (draws - 1.0);
            worst_mean = std::max(worst_mean, std::abs(mean - fit.mean) / fit.mean);
            worst_var = std::max(worst_var, std::abs(var - fit.variance) / fit.variance);
        }
        return {worst_mean <= 0.01 && worst_var <= 0.03,
                fmt("worst relative error: mean %.2e (tol 1e-2), variance %.2e (tol 3e-2)", worst_mean, worst_var)};
    }

    // ---------- 4: phase gradient against central differences ----------
    Outcome gradient_check()
    {
        const ScenarioConfig cfg;
        const ChannelModel model = build_channel_model(cfg);
        double worst = 0.0;
        int probes = 0;
        for (const double rho : {0.0, 100.0})
            for (std::uint64_t seed = 1; seed <= 5; ++seed)
            {
                Rng rng(derive_seed(seed, 0x6772));
                EEScenario sc = draw_ee_scenario(model, cfg, rng);
                const PhaseConfig ph = PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng);
                const double p = 2.0;
                // thresholds at the median unicast rate so both hinge branches are exercised
                RVector rates = rates_at(sc, link_snapshot(sc, ph), p).unicast_rates;
                std::sort(rates.begin(), rates.end());
                sc.problem.unicast_rate_threshold.setConstant(0.5 * (rates(1) + rates(2)));

                const RMatrix g = grad_penalized_sum_rate(sc, p, ph, rho);
                const double scale = g.cwiseAbs().maxCoeff();
                std::uniform_int_distribution<int> layer(0, cfg.num_layers - 1), atom(0, cfg.elements_per_layer - 1);
                for (int i = 0; i < 10; ++i)
                {
                    const int l = layer(rng), n = atom(rng);
                    const double h = 1e-6;
                    RMatrix up = ph.phases(), dn = ph.phases();
                    up(l, n) += h;
                    dn(l, n) -= h;
                    const double fd = (penalized_sum_rate(sc, p, PhaseConfig(up), rho) -
                                       penalized_sum_rate(sc, p, PhaseConfig(dn), rho)) /
                                      (2 * h);
                    worst = std::max(worst, std::abs(g(l, n) - fd) / std::max(std::abs(fd), 1e-3 * scale));
                    ++probes;
                }
            }
        return {worst <= 1e-5, fmt("%d probes, worst relative error %.2e (tol 1e-5)", probes, worst)};
    }

    // ---------- 5: golden-section power search ----------
    Outcome power_search()
    {
        const ScenarioConfig cfg;
        const ChannelModel model = build_channel_model(cfg);
        double worst = 0.0;
        int max_onsets = 0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed)
        {
            Rng rng(derive_seed(seed, 0x7077));
            const EEScenario sc = draw_ee_scenario(model, cfg, rng);
            const LinkSnapshot snap = link_snapshot(sc, PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng));
            const PowerBounds b = min_power_bounds(sc, snap);
            const PowerSearchResult r = optimize_power(sc, snap, b, cfg.joint_options().power);
            double best = 0.0, prev = -1.0;
            bool falling = false;
            int onsets = 0;
            for (int i = 0; i < 10000; ++i)
            {
                const double v = ee_value(sc, snap, b.minimum + (sc.problem.max_power - b.minimum) * i / 9999.0);
                best = std::max(best, v);
                const bool down = prev >= 0.0 && v < prev;
                onsets += down && !falling;
                falling = down;
                prev = v;
            }
            worst = std::max(worst, (best - r.ee) / best);
            max_onsets = std::max(max_onsets, onsets);
        }
        return {worst <= 1e-6 && max_onsets <= 1,
                fmt("worst shortfall vs 1e4-point grid %.2e (tol 1e-6), max descent onsets %d", worst, max_onsets)};
    }

    // ---------- 6: alternating optimization trajectory ----------
    Outcome ao_behavior()
    {
        const ScenarioConfig cfg;
        const ChannelModel model = build_channel_model(cfg);
        bool ok = true;
        int worst_iters = 0;
        double worst_drop = 0.0;
        for (std::uint64_t seed = 1; seed <= 4; ++seed)
        {
            Rng rng(derive_seed(seed, 0x616f));
            const EEScenario sc = draw_ee_scenario(model, cfg, rng);
            const OptimizerReport r = optimize_joint(
                sc, PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng), cfg.joint_options());
            for (std::size_t i = 1; i < r.ee_trajectory.size(); ++i)
            {
                const double drop = (r.ee_trajectory[i - 1] - r.ee_trajectory[i]) / r.ee_trajectory[i - 1];
                worst_drop = std::max(worst_drop, drop);
            }
            const double last = r.ee_trajectory.size() > 1
                                    ? std::abs(r.ee_trajectory.back() - r.ee_trajectory[r.ee_trajectory.size() - 2]) /
                                          r.ee_trajectory.back()
                                    : 1.0;
            ok = ok && r.converged && r.ao_iterations <= 30 && last < 1e-4;
            worst_iters = std::max(worst_iters, r.ao_iterations);
        }
        ok = ok && worst_drop <= 1e-9;
        return {ok, fmt("max AO iterations %d (limit 30), worst relative EE drop %.2e (slack 1e-9)", worst_iters,
                        std::max(worst_drop, 0.0))};
    }

    // ---------- 7: scheme ordering and the L sweep ----------
    Outcome scheme_ordering()
    {
        ScenarioConfig cfg;
        const std::vector<Scheme> baselines = {Scheme::power_opt, Scheme::phase_opt, Scheme::non_opt};
        int violations = 0, cases = 0;
        for (int layers = 1; layers <= 6; ++layers)
        {
            ScenarioConfig point = cfg;
            point.num_layers = layers;
            const ChannelModel model = build_channel_model(point);
            for (std::uint64_t t = 0; t < 10; ++t)
            {
                // same stream the sweep harness uses for trial t
                Rng rng(derive_seed(point.seed, 0x6565, t));
                const EEScenario sc = draw_ee_scenario(model, point, rng);
                const PhaseConfig init = PhaseConfig::random(point.num_layers, point.elements_per_layer, rng);
                const double joint = run_scheme(Scheme::joint_ao, sc, init, point.joint_options()).ee;
                for (Scheme s : baselines)
                {
                    ++cases;
                    violations += joint < run_scheme(s, sc, init, point.joint_options()).ee - 1e-9;
                }
            }
        }

        SweepSpec spec;
        spec.param = "L";
        spec.values = {1, 2, 3, 4, 5, 6};
        spec.trials = 10;
        spec.schemes = {Scheme::joint_ao};
        const auto rows = run_ee_sweep(cfg, spec);
        std::vector<double> mean;
        for (double v : spec.values)
            mean.push_back(row_value(rows, "Joint-AO", "EE", v));
        const auto peak = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
        const bool interior = peak > 0 && peak + 1 < mean.size();

        std::ostringstream curve;
        for (std::size_t i = 0; i < mean.size(); ++i)
            curve << (i ? " " : "") << fmt("%.4g", mean[i]);
        return {violations == 0 && interior,
                fmt("dominance violations %d/%d; mean Joint-AO EE by L=1..6 [%s] peaks at L=%zu (%s)", violations,
                    cases, curve.str().c_str(), peak + 1, interior ? "interior" : "boundary")};
    }

    // ---------- 8: P_max saturation ----------
    Outcome pmax_saturation()
    {
        const ScenarioConfig cfg;
        const ChannelModel model = build_channel_model(cfg);
        Rng rng(derive_seed(cfg.seed, 0x706d));
        const EEScenario base = draw_ee_scenario(model, cfg, rng);
        const PhaseConfig init = PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng);
        std::vector<double> ee;
        std::ostringstream detail;
        for (double pmax : {10.0, 20.0, 40.0})
        {
            EEScenario sc = base;
            sc.problem.max_power = pmax;
            const OptimizerReport r = optimize_joint(sc, init, cfg.joint_options());
            detail << fmt(" P_max=%g: P*=%.4g EE=%.6g;", pmax, r.power, r.ee);
            if (r.power < pmax)
                ee.push_back(r.ee);
        }
        if (ee.size() < 2)
            return {false, "fewer than two P_max values with an interior optimum:" + detail.str()};
        const auto [lo, hi] = std::minmax_element(ee.begin(), ee.end());
        const double spread = (*hi - *lo) / *hi;
        return {spread < 1e-3, fmt("relative spread %.2e (tol 1e-3);", spread) + detail.str()};
    }

    // ---------- 9: imperfect CSI ----------
    Outcome csi_degradation()
    {
        ScenarioConfig cfg;
        SweepSpec spec;
        spec.param = "epsilon";
        spec.values = {0.0, 0.1, 0.2, 0.3};
        spec.trials = 10;
        spec.schemes = {Scheme::joint_ao};
        const auto rows = run_ee_sweep(cfg, spec);
        std::vector<double> mean;
        for (double v : spec.values)
            mean.push_back(row_value(rows, "Joint-AO", "EE", v));
        bool monotone = true;
        for (std::size_t i = 1; i < mean.size(); ++i)
            monotone = monotone && mean[i] <= mean[i - 1];

        // bit-identical reduction at ε = 0 on the same draws
        const ChannelModel model = build_channel_model(cfg);
        bool identical = true;
        for (std::uint64_t seed = 1; seed <= 10; ++seed)
        {
            Rng rng(derive_seed(seed, 0x6373));
            const EEScenario sc = draw_ee_scenario(model, cfg, rng);
            const PhaseConfig ph = PhaseConfig::random(cfg.num_layers, cfg.elements_per_layer, rng);
            const Cascade c = cascade(ph, sc.propagation);
            const CMatrix g = equivalent_channels(sc.channels, c);
            const Precoder pre = zf_precode(g);
            RVector gains(g.rows());
            for (Eigen::Index k = 0; k < g.rows(); ++k)
                gains(k) = g.row(k).squaredNorm();
            const RVector p = equal_power_split(7.0, sc.num_users());
            const LinkRates a = sinr_rates(gains, p, sc.problem.noise_power);
            const LinkRates b = sinr_rates_imperfect(gains, p, sc.problem.noise_power, 0.0, sc.error_variance,
                                                     beam_energies(c, pre));
            identical = identical && a.sinr_unicast == b.sinr_unicast && a.sinr_multicast == b.sinr_multicast &&
                        a.unicast_rates == b.unicast_rates && a.multicast_rate == b.multicast_rate;
        }
        return {monotone && identical,
                fmt("mean Joint-AO EE at eps=0,.1,.2,.3: %.6g %.6g %.6g %.6g (%s); eps=0 reduction %s", mean[0], mean[1],
                    mean[2], mean[3], monotone ? "nonincreasing" : "NOT nonincreasing",
                    identical ? "bit-identical" : "differs")};
    }

    // ---------- 10: neural optimizer ----------
    Outcome neural_optimizer()
    {
        // (a) backward pass on the tiny instance
        double fd_worst = 0.0;
        {
            ScenarioConfig tiny;
            tiny.elements_per_layer = 4;
            tiny.num_layers = 2;
            tiny.num_users = 2;
            tiny.num_antennas = 3;
            tiny.hidden_width = 8;
            for (const double rho : {0.0, 100.0})
                for (const double thr : {0.1, 3.0})
                {
                    ScenarioConfig c = tiny;
                    c.unicast_rate_threshold_bps_hz = thr;
                    c.penalty = rho;
                    const ChannelModel model = build_channel_model(c);
                    Rng rng(derive_seed(c.seed, 0x6664, static_cast<std::uint64_t>(rho), static_cast<std::uint64_t>(thr * 10)));
                    Network net = Network::initialize(c.network_spec(), rng);
                    const EEScenario base = draw_ee_scenario(model, c, rng);
                    const auto data = draw_channel_samples(model, c, 6, 0x7472);
                    std::vector<const ChannelSample *> ptrs;
                    RMatrix f(net.spec().input_dim(), 6);
                    for (int i = 0; i < 6; ++i)
                    {
                        ptrs.push_back(&data[static_cast<std::size_t>(i)]);
                        f.col(i) = channel_features(data[static_cast<std::size_t>(i)]);
                    }
                    net.scaler() = FeatureScaler::fit(f);
                    const RMatrix x = net.scaler().apply(f);
                    const TrainerConfig tc = c.trainer_config();
                    RVector g;
                    batch_loss(net, base, ptrs, x, tc, &g, nullptr);
                    const double floor = 1e-3 * g.cwiseAbs().maxCoeff();
                    for (Eigen::Index i = 0; i < g.size(); ++i)
                    {
                        const double orig = net.parameters()(i);
                        const double h = 1e-6 * std::max(1.0, std::abs(orig));
                        net.parameters()(i) = orig + h;
                        const double up = batch_loss(net, base, ptrs, x, tc, nullptr, nullptr);
                        net.parameters()(i) = orig - h;
                        const double dn = batch_loss(net, base, ptrs, x, tc, nullptr, nullptr);
                        net.parameters()(i) = orig;
                        const double fd = (up - dn) / (2 * h);
                        fd_worst = std::max(fd_worst, std::abs(fd - g(i)) / std::max(std::abs(fd), floor));
                    }
                }
        }
        const bool pass_a = fd_worst <= 1e-4;

        // (b), (c) desk-scale training and evaluation
        ScenarioConfig desk;
        desk.elements_per_layer = 16;
        desk.num_layers = 2;
        desk.num_users = 3;
        desk.hidden_width = 64;
        desk.train_samples = 5000;
        TrainingReport rep;
        const Network net = train_network(desk, &rep);
        const auto eval = evaluate_network(desk, net);
        double ratio = 0.0;
        for (const auto &r : eval)
            if (r.metric == "EE-ratio-median")
                ratio = r.mean;
        const bool pass_b = ratio >= 0.85;

        const auto smooth = moving_average(rep.loss_history, 50);
        int rises = 0;
        double worst_rise = 0.0;
        std::size_t first_rise = 0;
        for (std::size_t i = 1; i < smooth.size(); ++i)
            if (smooth[i] > smooth[i - 1])
            {
                if (rises++ == 0)
                    first_rise = i + 1;
                worst_rise = std::max(worst_rise, smooth[i] - smooth[i - 1]);
            }
        const bool pass_c = rises == 0;

        // (d) per-solve runtime on the reference grid at the default width
        const ScenarioConfig timing_cfg;
        const auto timing = run_timing(timing_cfg, {{3, 9}, {2, 25}, {5, 25}, {3, 49}});
        bool pass_d = true;
        std::ostringstream ratios;
        for (const auto &r : timing)
            if (r.metric == "runtime-ratio")
            {
                pass_d = pass_d && r.mean > 1.0;
                ratios << " " << r.sweep_param.substr(2) << ",N=" << r.sweep_value << ":" << fmt("%.3g", r.mean);
            }

        std::string detail =
            fmt("(a) FD worst %.2e %s; (b) median EE ratio %.4f %s; ", fd_worst, pass_a ? "pass" : "FAIL", ratio,
                pass_b ? "pass" : "FAIL");
        detail += pass_c ? fmt("(c) smoothed loss nonincreasing over %d epochs pass; ", rep.epochs)
                         : fmt("(c) smoothed loss rises at %d of %d epochs (first at %zu, largest +%.2e on %.4g) FAIL; ",
                               rises, rep.epochs, first_rise, worst_rise, smooth.empty() ? 0.0 : smooth.back());
        detail += "(d) AO/uDNN time ratio" + ratios.str() + (pass_d ? " pass" : " FAIL");
        return {pass_a && pass_b && pass_c && pass_d, detail};
    }
} // namespace

int main(int argc, char **argv)
{
    const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
        {1, {"outage approximations vs Monte Carlo", outage_fidelity}},
        {2, {"exponential oracle", exponential_oracle}},
        {3, {"gain moment formulas", moment_formulas}},
        {4, {"phase gradient vs finite differences", gradient_check}},
        {5, {"golden-section power optimality", power_search}},
        {6, {"alternating optimization behavior", ao_behavior}},
        {7, {"scheme ordering and L sweep", scheme_ordering}},
        {8, {"P_max saturation", pmax_saturation}},
        {9, {"imperfect-CSI degradation", csi_degradation}},
        {10, {"neural optimizer", neural_optimizer}},
    };

    std::set<int> selected;
    for (int i = 1; i < argc; ++i)
        selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto &[id, entry] : criteria)
    {
        if (!selected.empty() && !selected.count(id))
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = entry.second();
        }
        catch (const std::exception &e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %2d  %-40s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, entry.first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
