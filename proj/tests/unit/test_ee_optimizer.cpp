// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/harness.hpp"

#include <doctest.h>

using namespace simhaps;

namespace
{
    EEScenario table_scenario(std::uint64_t seed, const ScenarioConfig &cfg = {})
    {
        const ChannelModel model = build_channel_model(cfg);
        Rng rng(seed);
        return draw_ee_scenario(model, cfg, rng);
    }

    PhaseConfig random_phases(const EEScenario &sc, std::uint64_t seed)
    {
        Rng rng(seed);
        return PhaseConfig::random(sc.num_layers(), sc.elements_per_layer(), rng);
    }

    double grid_max(const EEScenario &sc, const LinkSnapshot &snap, double lo, double hi, int points,
                    std::vector<double> *values = nullptr)
    {
        double best = 0.0;
        for (int i = 0; i < points; ++i)
        {
            const double v = ee_value(sc, snap, lo + (hi - lo) * i / (points - 1));
            if (values)
                values->push_back(v);
            best = std::max(best, v);
        }
        return best;
    }
} // namespace

TEST_CASE("circuit power at the default values")
{
    const ScenarioConfig cfg;
    CHECK(cfg.power_model().circuit_power(25, 3, 4) == doctest::Approx(14.79).epsilon(1e-12));
    CHECK(table_scenario(1).circuit_power() == doctest::Approx(14.79).epsilon(1e-12));
}

TEST_CASE("EE objective basics")
{
    EEScenario sc = table_scenario(2);
    const PhaseConfig ph = random_phases(sc, 3);
    CHECK(ee_objective(sc, 0.0, ph) == 0.0);

    const double base = ee_objective(sc, 5.0, ph);
    CHECK(base > 0.0);
    sc.problem.power.bandwidth *= 2.0;
    CHECK(ee_objective(sc, 5.0, ph) == doctest::Approx(2.0 * base).epsilon(1e-14));
}

TEST_CASE("minimum power bounds")
{
    EEScenario sc = table_scenario(4);
    const PhaseConfig ph = random_phases(sc, 5);
    LinkSnapshot snap = link_snapshot(sc, ph);

    SUBCASE("no QoS")
    {
        sc.problem.unicast_rate_threshold.setZero();
        sc.problem.multicast_rate_threshold = 0.0;
        CHECK(min_power_bounds(sc, snap).minimum == 0.0);
    }
    SUBCASE("single-user substitution")
    {
        EEScenario one = sc;
        one.channels.resize(1);
        one.error_variance.resize(1);
        one.problem.unicast_rate_threshold = RVector::Constant(1, 1.0);
        one.problem.multicast_rate_threshold = 0.0;
        one.problem.noise_power = 1.0;
        LinkSnapshot s1 = link_snapshot(one, ph);
        s1.gains(0) = 1.0; // ‖g‖² = N_0
        CHECK(min_power_bounds(one, s1).unicast == doctest::Approx(2.0));
    }
    SUBCASE("multicast threshold above one bit is infeasible")
    {
        sc.problem.multicast_rate_threshold = 1.2;
        try
        {
            min_power_bounds(sc, snap);
            FAIL("expected an error");
        }
        catch (const Error &e)
        {
            CHECK(e.kind() == ErrorKind::infeasible);
        }
    }
    SUBCASE("bounds meet the thresholds with equality")
    {
        const PowerBounds b = min_power_bounds(sc, snap);
        const LinkRates r = rates_at(sc, snap, b.minimum * (1 + 1e-12));
        CHECK(r.multicast_rate >= sc.problem.multicast_rate_threshold - 1e-9);
        CHECK((r.unicast_rates.array() >= sc.problem.unicast_rate_threshold.array() - 1e-9).all());
        const LinkRates below = rates_at(sc, snap, b.minimum * 0.99);
        const bool short_somewhere =
            below.multicast_rate < sc.problem.multicast_rate_threshold ||
            (below.unicast_rates.array() < sc.problem.unicast_rate_threshold.array()).any();
        CHECK(short_somewhere);
    }
    SUBCASE("perfect CSI reduces the imperfect formulas exactly")
    {
        EEScenario imperfect = sc;
        imperfect.csi_error = 1e-300; // ε² underflows to zero
        const LinkSnapshot s2 = link_snapshot(imperfect, ph);
        CHECK(min_power_bounds(imperfect, s2).minimum == min_power_bounds(sc, snap).minimum);
    }
}

TEST_CASE("golden-section power search")
{
    for (std::uint64_t seed = 1; seed <= 4; ++seed)
    {
        const EEScenario sc = table_scenario(seed);
        const LinkSnapshot snap = link_snapshot(sc, random_phases(sc, seed + 100));
        const PowerBounds b = min_power_bounds(sc, snap);
        const PowerSearchResult r = optimize_power(sc, snap, b);
        std::vector<double> values;
        const double best = grid_max(sc, snap, b.minimum, sc.problem.max_power, 10000, &values);
        CHECK(r.ee >= best * (1 - 1e-6));
        CHECK(r.power >= b.minimum);
        CHECK(r.power <= sc.problem.max_power);

        // quasi-concavity: at most one switch from rising to falling
        int onsets = 0;
        bool falling = false;
        for (std::size_t i = 1; i < values.size(); ++i)
        {
            const bool down = values[i] < values[i - 1];
            if (down && !falling)
                ++onsets;
            falling = down;
        }
        CHECK(onsets <= 1);
    }
}

TEST_CASE("golden-section contraction and boundary maximizer")
{
    EEScenario sc = table_scenario(7);
    const LinkSnapshot snap = link_snapshot(sc, random_phases(sc, 8));
    PowerBounds b = min_power_bounds(sc, snap);

    PowerSearchOptions opt;
    opt.max_iterations = 7;
    opt.relative_tolerance = 0.0;
    const PowerSearchResult r = optimize_power(sc, snap, b, opt);
    CHECK(r.iterations == 7);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    CHECK(r.upper - r.lower == doctest::Approx(std::pow(ratio, 7) * (sc.problem.max_power - b.minimum)).epsilon(1e-9));

    // start the bracket beyond the EE peak so EE falls over the whole interval
    const PowerSearchResult full = optimize_power(sc, snap, b);
    b.minimum = 2.0 * full.power;
    sc.problem.max_power = 4.0 * full.power;
    const PowerSearchResult edge = optimize_power(sc, snap, b);
    CHECK(edge.power == doctest::Approx(b.minimum).epsilon(1e-6));

    b.minimum = sc.problem.max_power * 2.0;
    CHECK_THROWS_AS(optimize_power(sc, snap, b), Error);
}

TEST_CASE("penalized sum rate")
{
    EEScenario sc = table_scenario(9);
    const PhaseConfig ph = random_phases(sc, 10);
    const LinkSnapshot snap = link_snapshot(sc, ph);
    const double p = 5.0;
    const LinkRates r = rates_at(sc, snap, p);

    sc.problem.unicast_rate_threshold.setZero();
    sc.problem.multicast_rate_threshold = 0.0;
    CHECK(penalized_sum_rate(sc, p, ph, 100.0) == doctest::Approx(r.sum_rate()).epsilon(1e-14));

    const double delta = 0.37;
    sc.problem.unicast_rate_threshold(2) = r.unicast_rates(2) + delta;
    CHECK(penalized_sum_rate(sc, p, ph, 0.0) == doctest::Approx(r.sum_rate()).epsilon(1e-14));
    CHECK(penalized_sum_rate(sc, p, ph, 100.0) == doctest::Approx(r.sum_rate() - 100.0 * delta).epsilon(1e-12));
}

TEST_CASE("penalized sum-rate gradient against central differences")
{
    for (double rho : {0.0, 10.0, 100.0})
        for (std::uint64_t seed : {11u, 12u})
        {
            ScenarioConfig cfg;
            cfg.unicast_rate_threshold_bps_hz = 3.0; // a mix of active and inactive hinges
            const EEScenario sc = table_scenario(seed, cfg);
            const PhaseConfig ph = random_phases(sc, seed + 50);
            const double p = 4.0;
            const RMatrix g = grad_penalized_sum_rate(sc, p, ph, rho);
            Rng pick(seed);
            std::uniform_int_distribution<int> layer(0, sc.num_layers() - 1), atom(0, sc.elements_per_layer() - 1);
            const double h = 1e-6;
            for (int probe = 0; probe < 30; ++probe)
            {
                const int l = layer(pick), n = atom(pick);
                RMatrix up = ph.phases(), dn = ph.phases();
                up(l, n) += h;
                dn(l, n) -= h;
                const double fd =
                    (penalized_sum_rate(sc, p, PhaseConfig(up), rho) - penalized_sum_rate(sc, p, PhaseConfig(dn), rho)) /
                    (2 * h);
                CHECK(std::abs(g(l, n) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
            }
        }
}

TEST_CASE("gradient special cases")
{
    EEScenario sc = table_scenario(13);
    const PhaseConfig ph = random_phases(sc, 14);
    CHECK(grad_penalized_sum_rate(sc, 0.0, ph, 100.0).cwiseAbs().maxCoeff() == 0.0);

    EEScenario free = sc;
    free.problem.unicast_rate_threshold.setZero();
    free.problem.multicast_rate_threshold = 0.0;
    CHECK(grad_penalized_sum_rate(free, 3.0, ph, 0.0) == grad_penalized_sum_rate(free, 3.0, ph, 100.0));
}

TEST_CASE("projected gradient ascent")
{
    const EEScenario sc = table_scenario(15);
    const PhaseSearchResult r = optimize_phases(sc, 5.0, random_phases(sc, 16), 100.0);
    REQUIRE(r.objective.size() >= 2);
    for (std::size_t i = 1; i < r.objective.size(); ++i)
        CHECK(r.objective[i] >= r.objective[i - 1]);
    CHECK((r.phases.phases().array() >= 0.0).all());
    CHECK((r.phases.phases().array() < kTwoPi).all());

    // zero power makes every gradient vanish
    const PhaseConfig start = random_phases(sc, 17);
    const PhaseSearchResult still = optimize_phases(sc, 0.0, start, 100.0);
    CHECK(still.phases.phases() == start.phases());
}

TEST_CASE("alternating optimization")
{
    const EEScenario sc = table_scenario(18);
    const PhaseConfig start = random_phases(sc, 19);

    SUBCASE("one iteration with fixed phases is the power search")
    {
        JointOptions o;
        o.max_iterations = 1;
        o.optimize_phases = false;
        const OptimizerReport r = optimize_joint(sc, start, o);
        const LinkSnapshot snap = link_snapshot(sc, start);
        const PowerSearchResult ps = optimize_power(sc, snap, min_power_bounds(sc, snap));
        CHECK(r.power == ps.power);
        CHECK(r.ee == doctest::Approx(ps.ee).epsilon(1e-14));
    }
    SUBCASE("monotone and converged")
    {
        const OptimizerReport r = optimize_joint(sc, start);
        CHECK(r.converged);
        CHECK(r.ao_iterations <= 30);
        for (std::size_t i = 1; i < r.ee_trajectory.size(); ++i)
            CHECK(r.ee_trajectory[i] >= r.ee_trajectory[i - 1] - 1e-9 * r.ee_trajectory[i - 1]);
        CHECK(r.qos_satisfied);
        for (Scheme s : {Scheme::power_opt, Scheme::phase_opt, Scheme::non_opt})
            CHECK(r.ee >= run_scheme(s, sc, start).ee - 1e-9);
    }
    SUBCASE("scheme names round-trip")
    {
        for (Scheme s : {Scheme::joint_ao, Scheme::joint_udnn, Scheme::power_opt, Scheme::phase_opt, Scheme::non_opt})
            CHECK(parse_scheme(scheme_name(s)) == s);
        CHECK_THROWS_AS(parse_scheme("Greedy"), Error);
    }
}

TEST_CASE("maximum power stops mattering once the optimum is interior")
{
    ScenarioConfig cfg;
    const EEScenario base = table_scenario(20, cfg);
    const PhaseConfig start = random_phases(base, 21);
    std::vector<double> ee;
    for (double pmax : {10.0, 20.0, 40.0})
    {
        EEScenario sc = base;
        sc.problem.max_power = pmax;
        const OptimizerReport r = optimize_joint(sc, start);
        REQUIRE(r.power < pmax);
        ee.push_back(r.ee);
    }
    const auto [lo, hi] = std::minmax_element(ee.begin(), ee.end());
    CHECK((*hi - *lo) / *hi < 1e-3);
}
