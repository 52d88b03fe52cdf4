// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/outage.hpp"
#include "simhaps/special.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace simhaps
{
    OutageThresholds OutageThresholds::from_rates(double multicast_rate, const RVector &unicast_rates)
    {
        OutageThresholds t;
        t.multicast = std::exp2(multicast_rate) - 1.0;
        t.unicast = unicast_rates.unaryExpr([](double r) { return std::exp2(r) - 1.0; });
        return t;
    }

    OutageThresholds OutageThresholds::from_rates(double rate, int num_users)
    {
        return from_rates(rate, RVector::Constant(num_users, rate));
    }

    double outage_gain_threshold(const OutageThresholds &thresholds, int user, const RVector &powers, double noise_power)
    {
        const double p0 = powers(0);
        const double pk = powers(user + 1);
        const double g0 = thresholds.multicast;
        const double gk = thresholds.unicast(user);
        if (!(p0 > g0 * pk))
            return std::numeric_limits<double>::infinity();
        const double unicast = gk > 0.0 ? gk * noise_power / pk : 0.0;
        return std::max(g0 * noise_power / (p0 - g0 * pk), unicast);
    }

    UserStatistics user_statistics(const UserGeometry &user, const SimGeometry &geometry, double rician_factor)
    {
        UserStatistics s;
        const CVector los = steering_vector(user.azimuth, user.elevation, geometry);
        const double root_beta = std::sqrt(user.path_loss);
        if (std::isinf(rician_factor))
        {
            s.los_mean = root_beta * los;
            s.nlos_scale = 0.0;
        }
        else
        {
            s.los_mean = root_beta * std::sqrt(rician_factor / (1.0 + rician_factor)) * los;
            s.nlos_scale = root_beta * std::sqrt(1.0 / (1.0 + rician_factor));
        }
        return s;
    }

    CMatrix effective_covariance(const Cascade &cascade) { return cascade.effective * cascade.effective.adjoint(); }

    GammaFit gamma_moments(const CVector &los_mean, double nlos_scale, const RMatrix &correlation,
                           const CMatrix &effective_cov)
    {
        const CMatrix r_rc = correlation.cast<cdouble>() * effective_cov;
        const double b2 = nlos_scale * nlos_scale;
        const CVector rc_a = effective_cov * los_mean;

        GammaFit fit;
        fit.mean = los_mean.dot(rc_a).real() + b2 * r_rc.trace().real();
        fit.variance = b2 * b2 * (r_rc * r_rc).trace().real() +
                       2.0 * b2 * rc_a.dot(correlation.cast<cdouble>() * rc_a).real();
        if (!(fit.mean > 0.0))
            throw Error(ErrorKind::numerical, "channel gain has non-positive mean");
        if (fit.variance > 0.0)
        {
            fit.shape = fit.mean * fit.mean / fit.variance;
            fit.scale = fit.variance / fit.mean;
        }
        else
            fit.variance = 0.0;
        return fit;
    }

    double outage_gamma(double xi, double shape, double scale)
    {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw Error(ErrorKind::domain, "gamma shape and scale must be positive");
        if (std::isinf(xi))
            return 1.0;
        return special::gamma_p(shape, std::max(xi, 0.0) / scale);
    }

    OutageEstimate outage_gamma(double xi, const GammaFit &fit)
    {
        if (fit.degenerate())
            return {xi >= fit.mean ? 1.0 : 0.0, true};
        return {outage_gamma(xi, fit.shape, fit.scale), false};
    }

    double outage_gamma_asymptotic(double xi, double shape, double scale)
    {
        if (!(shape > 0.0) || !(scale > 0.0))
            throw Error(ErrorKind::domain, "gamma shape and scale must be positive");
        if (xi <= 0.0)
            return 0.0;
        return std::exp(shape * std::log(xi / scale) - std::lgamma(shape + 1.0));
    }

    double SaddlepointContext::mean() const
    {
        return (eigenvalues.array() * (1.0 + noncentrality.array())).sum();
    }

    SaddlepointContext spa_context(const CVector &los_mean, double nlos_scale, const RMatrix &correlation,
                                   const CMatrix &effective_cov)
    {
        if (!(nlos_scale > 0.0))
            throw Error(ErrorKind::numerical, "saddlepoint needs a random component (degenerate spectrum)");

        const CMatrix f = nlos_scale * regularized_cholesky(correlation).cast<cdouble>();
        CMatrix whitened = f.adjoint() * effective_cov * f;
        whitened = 0.5 * (whitened + whitened.adjoint()).eval();

        Eigen::SelfAdjointEigenSolver<CMatrix> eig(whitened);
        if (eig.info() != Eigen::Success)
            throw Error(ErrorKind::numerical, "eigendecomposition of the whitened covariance failed");

        const RVector &zeta = eig.eigenvalues();
        const double zeta_max = zeta.maxCoeff();
        if (!(zeta_max > 0.0))
            throw Error(ErrorKind::numerical, "degenerate spectrum: no positive eigenvalue");
        if (zeta.minCoeff() < -1e-10 * zeta_max)
            throw Error(ErrorKind::numerical, "negative eigenvalue in a PSD quadratic form");

        const CVector shifted = f.triangularView<Eigen::Lower>().solve(los_mean); // F⁻¹ a
        const CVector projected = eig.eigenvectors().adjoint() * shifted;

        std::vector<Eigen::Index> kept;
        for (Eigen::Index i = 0; i < zeta.size(); ++i)
            if (zeta(i) >= 1e-12 * zeta_max)
                kept.push_back(i);

        SaddlepointContext ctx;
        ctx.eigenvalues.resize(static_cast<Eigen::Index>(kept.size()));
        ctx.noncentrality.resize(static_cast<Eigen::Index>(kept.size()));
        for (std::size_t j = 0; j < kept.size(); ++j)
        {
            ctx.eigenvalues(static_cast<Eigen::Index>(j)) = zeta(kept[j]);
            ctx.noncentrality(static_cast<Eigen::Index>(j)) = std::norm(projected(kept[j]));
        }
        return ctx;
    }

    CgfValue cgf(double s, const SaddlepointContext &ctx)
    {
        CgfValue out;
        for (Eigen::Index i = 0; i < ctx.eigenvalues.size(); ++i)
        {
            const double z = ctx.eigenvalues(i);
            const double mu = ctx.noncentrality(i);
            const double x = 1.0 - s * z;
            if (!(x > 0.0))
                throw Error(ErrorKind::domain, "CGF evaluated outside s·ζ < 1");
            out.value += -std::log1p(-s * z) + s * z * mu / x;
            out.d1 += z / x + z * mu / (x * x);
            out.d2 += z * z / (x * x) + 2.0 * z * z * mu / (x * x * x);
        }
        return out;
    }

    SaddlepointSolution solve_saddlepoint(double xi, const SaddlepointContext &ctx)
    {
        if (!(xi > 0.0) || std::isinf(xi))
            throw Error(ErrorKind::domain, "saddlepoint equation needs a finite positive threshold");

        const double mean = ctx.mean();
        SaddlepointSolution sol;
        if (std::abs(xi - mean) <= 1e-8 * mean)
        {
            sol.mean_singular = true;
            return sol;
        }

        const double s_cap = 1.0 / ctx.max_eigenvalue();
        double lo, hi;
        if (xi > mean)
        {
            lo = 0.0;
            hi = s_cap;
        }
        else
        {
            hi = 0.0;
            lo = -s_cap;
            while (cgf(lo, ctx).d1 > xi)
            {
                hi = lo;
                lo *= 2.0;
                if (!std::isfinite(lo))
                    throw Error(ErrorKind::numerical, "failed to bracket the saddlepoint");
            }
        }

        double s = 0.5 * (lo + hi);
        for (int it = 1; it <= 200; ++it)
        {
            const CgfValue c = cgf(s, ctx);
            const double residual = c.d1 - xi;
            sol.iterations = it;
            if (std::abs(residual) <= 1e-10 * xi)
            {
                sol.point = s;
                return sol;
            }
            // C_g' is increasing: shrink the bracket around the root
            if (residual > 0.0)
                hi = s;
            else
                lo = s;

            double next = s - residual / c.d2;
            if (!(next > lo && next < hi))
                next = 0.5 * (lo + hi);
            if (next == s)
            {
                sol.point = s;
                return sol;
            }
            s = next;
        }
        throw Error(ErrorKind::numerical, "saddlepoint Newton iteration did not converge in 200 steps");
    }

    namespace
    {
        // u/(1-u) + log(1-u) = Σ_{n≥2} (1 - 1/n) uⁿ, summed directly for small |u| to avoid cancellation
        double legendre_term(double u)
        {
            if (std::abs(u) >= 0.1)
                return u / (1.0 - u) + std::log1p(-u);
            double acc = 0.0, power = u;
            for (int n = 2; n < 40; ++n)
            {
                power *= u;
                acc += (1.0 - 1.0 / n) * power;
            }
            return acc;
        }

        // s·C'(s) - C(s) ≥ 0, accurate to full relative precision near s = 0
        double legendre_transform(double s, const SaddlepointContext &ctx)
        {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < ctx.eigenvalues.size(); ++i)
            {
                const double u = s * ctx.eigenvalues(i);
                const double r = u / (1.0 - u);
                acc += legendre_term(u) + ctx.noncentrality(i) * r * r;
            }
            return std::max(acc, 0.0);
        }

        // Lugannani-Rice limit at the mean: 1/2 + κ₃ / (6√(2π) κ₂^{3/2})
        double lugannani_rice_at_mean(const SaddlepointContext &ctx)
        {
            const RVector &z = ctx.eigenvalues;
            const RVector &mu = ctx.noncentrality;
            const double k2 = (z.array().square() * (1.0 + 2.0 * mu.array())).sum();
            const double k3 = 2.0 * (z.array().cube() * (1.0 + 3.0 * mu.array())).sum();
            return std::clamp(0.5 + k3 / (6.0 * std::sqrt(kTwoPi) * std::pow(k2, 1.5)), 0.0, 1.0);
        }

        // evaluated at x = C'(s), so ω and ϖ stay consistent with the same s
        double lugannani_rice(const SaddlepointContext &ctx, double s)
        {
            const CgfValue c = cgf(s, ctx);
            const double varpi = s * std::sqrt(c.d2);
            if (std::abs(varpi) < 1e-5)
                return lugannani_rice_at_mean(ctx);
            const double sign = s >= 0.0 ? 1.0 : -1.0;
            const double omega = sign * std::sqrt(2.0 * legendre_transform(s, ctx));
            const double p = special::normal_cdf(omega) + special::normal_pdf(omega) * (1.0 / omega - 1.0 / varpi);
            return std::clamp(p, 0.0, 1.0);
        }
    } // namespace

    OutageEstimate outage_spa(double xi, const SaddlepointContext &ctx)
    {
        if (!(xi > 0.0))
            return {0.0, false};
        if (std::isinf(xi))
            return {1.0, false};

        const SaddlepointSolution sol = solve_saddlepoint(xi, ctx);
        if (sol.mean_singular)
            return {lugannani_rice_at_mean(ctx), true};
        return {lugannani_rice(ctx, sol.point), false};
    }

    namespace
    {
        struct McUserTerms
        {
            Eigen::RowVectorXcd mean_gain; // a_kᴴ C
            CMatrix random_gain;           // (b F₀)ᴴ C, so g_k = mean_gain + qᴴ random_gain
        };

        struct McTally
        {
            std::vector<std::vector<long>> outages; // [allocation][user]
        };

        McTally run_chunk(const std::vector<McUserTerms> &users, const std::vector<RVector> &allocations,
                          const OutageThresholds &thresholds, double noise_power, long trials, std::uint64_t seed)
        {
            const auto k = static_cast<Eigen::Index>(users.size());
            const auto n_el = users.front().random_gain.rows();
            const auto m_ant = users.front().random_gain.cols();

            McTally tally;
            tally.outages.assign(allocations.size(), std::vector<long>(static_cast<std::size_t>(k), 0));

            Rng rng(seed);
            ComplexGaussian cn;
            CMatrix g(k, m_ant);
            CVector q(n_el);
            for (long t = 0; t < trials; ++t)
            {
                for (Eigen::Index u = 0; u < k; ++u)
                {
                    for (Eigen::Index i = 0; i < n_el; ++i)
                        q(i) = cn(rng);
                    const auto &terms = users[static_cast<std::size_t>(u)];
                    g.row(u) = terms.mean_gain + q.adjoint() * terms.random_gain;
                }
                const Precoder w = zf_precode(g);
                for (std::size_t a = 0; a < allocations.size(); ++a)
                {
                    const LinkRates r = sinr_rates_general(g, w, allocations[a], noise_power);
                    for (Eigen::Index u = 0; u < k; ++u)
                        if (r.sinr_multicast(u) <= thresholds.multicast || r.sinr_unicast(u) <= thresholds.unicast(u))
                            ++tally.outages[a][static_cast<std::size_t>(u)];
                }
            }
            return tally;
        }
    } // namespace

    std::vector<MonteCarloOutage> outage_montecarlo(const ChannelModel &model, const PhaseConfig &phases,
                                                    const std::vector<RVector> &power_allocations,
                                                    const OutageThresholds &thresholds, double noise_power,
                                                    long trials, std::uint64_t seed)
    {
        if (trials < 1)
            throw Error(ErrorKind::domain, "Monte Carlo needs at least one trial");
        if (model.users.empty())
            throw Error(ErrorKind::domain, "Monte Carlo needs at least one user");

        const Cascade c = cascade(phases, model.propagation);
        const CMatrix factor = model.propagation.correlation_factor.cast<cdouble>();

        std::vector<McUserTerms> users;
        for (const auto &u : model.users)
        {
            const UserStatistics s = user_statistics(u, model.geometry, model.rician_factor);
            users.push_back({s.los_mean.adjoint() * c.effective, (s.nlos_scale * factor).adjoint() * c.effective});
        }

        // Fixed chunking keeps results independent of the thread count.
        constexpr long kChunks = 64;
        const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), kChunks));
        std::vector<McTally> tallies(static_cast<std::size_t>(kChunks));
        auto chunk_trials = [&](long chunk) { return trials / kChunks + (chunk < trials % kChunks ? 1 : 0); };

        std::vector<std::exception_ptr> failures(workers);
        auto work = [&](unsigned worker) {
            try
            {
                for (long chunk = worker; chunk < kChunks; chunk += workers)
                    tallies[static_cast<std::size_t>(chunk)] =
                        run_chunk(users, power_allocations, thresholds, noise_power, chunk_trials(chunk),
                                  derive_seed(seed, 0x6d63, static_cast<std::uint64_t>(chunk)));
            }
            catch (...)
            {
                failures[worker] = std::current_exception();
            }
        };
        if (workers == 1)
            work(0);
        else
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w)
                pool.emplace_back(work, w);
        }
        for (const auto &f : failures)
            if (f)
                std::rethrow_exception(f);

        std::vector<MonteCarloOutage> out(power_allocations.size());
        const auto k = static_cast<Eigen::Index>(users.size());
        for (std::size_t a = 0; a < power_allocations.size(); ++a)
        {
            out[a].trials = trials;
            out[a].probability = RVector::Zero(k);
            out[a].standard_error = RVector::Zero(k);
            for (Eigen::Index u = 0; u < k; ++u)
            {
                long count = 0;
                for (const auto &t : tallies)
                    count += t.outages[a][static_cast<std::size_t>(u)];
                const double p = static_cast<double>(count) / static_cast<double>(trials);
                out[a].probability(u) = p;
                out[a].standard_error(u) = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
            }
        }
        return out;
    }

} // namespace simhaps
