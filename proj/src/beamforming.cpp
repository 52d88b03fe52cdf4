// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace simhaps
{
    PhaseConfig::PhaseConfig(RMatrix phases) : phases_(std::move(phases))
    {
        phases_ = phases_.unaryExpr([](double t) { return wrap_phase(t); });
    }

    PhaseConfig PhaseConfig::constant(int num_layers, int elements_per_layer, double value)
    {
        return PhaseConfig(RMatrix::Constant(num_layers, elements_per_layer, value));
    }

    PhaseConfig PhaseConfig::random(int num_layers, int elements_per_layer, Rng &rng)
    {
        std::uniform_real_distribution<double> u(0.0, kTwoPi);
        RMatrix p(num_layers, elements_per_layer);
        for (int l = 0; l < num_layers; ++l)
            for (int n = 0; n < elements_per_layer; ++n)
                p(l, n) = u(rng);
        return PhaseConfig(std::move(p));
    }

    CVector PhaseConfig::layer_diagonal(int layer) const
    {
        const auto row = phases_.row(layer - 1);
        CVector d(row.size());
        for (Eigen::Index n = 0; n < row.size(); ++n)
            d(n) = std::polar(1.0, row(n));
        return d;
    }

    Cascade cascade(const PhaseConfig &phases, const PropagationSet &propagation)
    {
        const int num_layers = phases.num_layers();
        if (num_layers != propagation.num_layers())
            throw Error(ErrorKind::domain, "phase configuration and propagation set disagree on the layer count");
        const auto n_el = phases.elements_per_layer();

        Cascade c;
        c.diagonals.reserve(static_cast<std::size_t>(num_layers));
        for (int l = 1; l <= num_layers; ++l)
            c.diagonals.push_back(phases.layer_diagonal(l));

        const CMatrix eye = CMatrix::Identity(n_el, n_el);
        c.inner.assign(static_cast<std::size_t>(num_layers), eye);
        c.outer.assign(static_cast<std::size_t>(num_layers), eye);

        // B_{l,2} = Ψ_l Θ_{l-1} B_{l-1,2}
        for (int l = 2; l <= num_layers; ++l)
            c.inner[l - 1] = propagation.layer(l) * (c.diagonals[l - 2].asDiagonal() * c.inner[l - 2]);

        // B_{l,1} = B_{l+1,1} Θ_{l+1} Ψ_{l+1}
        for (int l = num_layers - 1; l >= 1; --l)
            c.outer[l - 1] = (c.outer[l] * c.diagonals[l].asDiagonal()) * propagation.layer(l + 1);

        c.transfer = c.outer[num_layers - 1] * (c.diagonals[num_layers - 1].asDiagonal() * c.inner[num_layers - 1]);
        c.effective = c.transfer * propagation.feed;
        return c;
    }

    CMatrix equivalent_channels(const std::vector<CVector> &channels, const Cascade &cascade)
    {
        const auto k = static_cast<Eigen::Index>(channels.size());
        CMatrix g(k, cascade.effective.cols());
        for (Eigen::Index i = 0; i < k; ++i)
            g.row(i) = channels[static_cast<std::size_t>(i)].adjoint() * cascade.effective;
        return g;
    }

    Precoder zf_precode(const CMatrix &g)
    {
        const auto k = g.rows();
        if (k > g.cols())
            throw Error(ErrorKind::ill_conditioned, "zero-forcing needs K <= M");

        const CMatrix gram = g * g.adjoint();
        Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > 1e12)
            throw Error(ErrorKind::ill_conditioned,
                        "channel Gram matrix is ill-conditioned (cond = " + std::to_string(hi / lo) + ")");

        CMatrix d = CMatrix::Zero(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            d(i, i) = g.row(i).norm();

        Precoder p;
        p.unicast = g.adjoint() * gram.ldlt().solve(d);
        p.multicast = p.unicast.rowwise().sum();
        return p;
    }

    RVector equal_power_split(double total_power, int num_users)
    {
        return RVector::Constant(num_users + 1, total_power / (num_users + 1));
    }

    namespace
    {
        void finish_rates(LinkRates &r)
        {
            const auto k = r.sinr_unicast.size();
            r.unicast_rates.resize(k);
            for (Eigen::Index i = 0; i < k; ++i)
                r.unicast_rates(i) = std::log2(1.0 + r.sinr_unicast(i));

            r.weakest_user = 0;
            double best = std::log2(1.0 + r.sinr_multicast(0));
            for (Eigen::Index i = 1; i < k; ++i)
            {
                const double v = std::log2(1.0 + r.sinr_multicast(i));
                if (v < best)
                {
                    best = v;
                    r.weakest_user = static_cast<int>(i);
                }
            }
            r.multicast_rate = best;
        }

        void check_inputs(const RVector &gains, const RVector &powers, double noise_power)
        {
            if (!(noise_power > 0.0))
                throw Error(ErrorKind::domain, "noise power must be positive");
            if (powers.size() != gains.size() + 1)
                throw Error(ErrorKind::domain, "expected K+1 stream powers");
            if (gains.size() == 0)
                throw Error(ErrorKind::domain, "at least one user is required");
            if ((powers.array() < 0.0).any())
                throw Error(ErrorKind::domain, "stream powers must be non-negative");
        }
    } // namespace

    LinkRates sinr_rates(const RVector &gains, const RVector &powers, double noise_power)
    {
        check_inputs(gains, powers, noise_power);
        const auto k = gains.size();
        LinkRates r;
        r.sinr_multicast.resize(k);
        r.sinr_unicast.resize(k);
        for (Eigen::Index i = 0; i < k; ++i)
        {
            const double g = gains(i);
            const double pk = powers(i + 1);
            r.sinr_multicast(i) = g * powers(0) / (g * pk + noise_power);
            r.sinr_unicast(i) = g * pk / noise_power;
        }
        finish_rates(r);
        return r;
    }

    LinkRates sinr_rates_imperfect(const RVector &gains, const RVector &powers, double noise_power, double csi_error,
                                   const RVector &error_variance, const RVector &beam_energy)
    {
        check_inputs(gains, powers, noise_power);
        if (!(csi_error >= 0.0 && csi_error <= 1.0))
            throw Error(ErrorKind::domain, "CSI error must lie in [0, 1]");
        const auto k = gains.size();
        if (error_variance.size() != k || beam_energy.size() != k + 1)
            throw Error(ErrorKind::domain, "error variance / beam energy sizes do not match K");

        const double eps2 = csi_error * csi_error;
        const double signal_scale = 1.0 - eps2;
        const double leakage_sum = beam_energy.dot(powers);

        LinkRates r;
        r.sinr_multicast.resize(k);
        r.sinr_unicast.resize(k);
        for (Eigen::Index i = 0; i < k; ++i)
        {
            const double g = signal_scale * gains(i);
            const double leak = eps2 * error_variance(i) * leakage_sum;
            r.sinr_multicast(i) = g * powers(0) / (g * powers(i + 1) + leak + noise_power);
            r.sinr_unicast(i) = g * powers(i + 1) / (leak + noise_power);
        }
        finish_rates(r);
        return r;
    }

    RVector beam_energies(const Cascade &cascade, const Precoder &precoder)
    {
        const auto k = precoder.unicast.cols();
        RVector e(k + 1);
        e(0) = (cascade.effective * precoder.multicast).squaredNorm();
        for (Eigen::Index r = 0; r < k; ++r)
            e(r + 1) = (cascade.effective * precoder.unicast.col(r)).squaredNorm();
        return e;
    }

    LinkRates sinr_rates_general(const CMatrix &g, const Precoder &precoder, const RVector &powers, double noise_power)
    {
        const auto k = g.rows();
        if (!(noise_power > 0.0))
            throw Error(ErrorKind::domain, "noise power must be positive");
        if (powers.size() != k + 1)
            throw Error(ErrorKind::domain, "expected K+1 stream powers");

        const CMatrix cross = g * precoder.unicast; // (k, r) = g_k w̄_r
        const CVector common = g * precoder.multicast;

        LinkRates r;
        r.sinr_multicast.resize(k);
        r.sinr_unicast.resize(k);
        for (Eigen::Index i = 0; i < k; ++i)
        {
            double unicast_total = 0.0;
            for (Eigen::Index j = 0; j < k; ++j)
                unicast_total += std::norm(cross(i, j)) * powers(j + 1);
            const double own = std::norm(cross(i, i)) * powers(i + 1);
            r.sinr_multicast(i) = std::norm(common(i)) * powers(0) / (unicast_total + noise_power);
            r.sinr_unicast(i) = own / (unicast_total - own + noise_power);
        }
        finish_rates(r);
        return r;
    }

    namespace
    {
        // g_kᴴ = Cᴴ h, pulled back through Ψ_1: v = Ψ_1 g_kᴴ
        CVector pulled_back_gain(const Cascade &cascade, const PropagationSet &propagation, const CVector &channel)
        {
            return propagation.feed * (cascade.effective.adjoint() * channel);
        }
    } // namespace

    double grad_gain(const Cascade &cascade, const PropagationSet &propagation, const CVector &channel, int layer, int n)
    {
        const CVector v = pulled_back_gain(cascade, propagation, channel);
        const auto idx = static_cast<std::size_t>(layer - 1);
        const cdouble x = channel.adjoint() * cascade.outer[idx].col(n);
        const cdouble y = cascade.inner[idx].row(n) * v;
        const cdouble d = cascade.diagonals[idx](n);
        return 2.0 * (cdouble(0.0, 1.0) * d * x * y).real();
    }

    RMatrix grad_gain_all(const Cascade &cascade, const PropagationSet &propagation, const CVector &channel)
    {
        const int num_layers = cascade.num_layers();
        const auto n_el = cascade.transfer.rows();
        const CVector v = pulled_back_gain(cascade, propagation, channel);

        RMatrix grad(num_layers, n_el);
        for (int l = 0; l < num_layers; ++l)
        {
            const auto idx = static_cast<std::size_t>(l);
            const CVector x = cascade.outer[idx].transpose() * channel.conjugate(); // (hᴴ B_{l,1})ᵀ
            const CVector y = cascade.inner[idx] * v;
            for (Eigen::Index n = 0; n < n_el; ++n)
                grad(l, n) = 2.0 * (cdouble(0.0, 1.0) * cascade.diagonals[idx](n) * x(n) * y(n)).real();
        }
        return grad;
    }

} // namespace simhaps
