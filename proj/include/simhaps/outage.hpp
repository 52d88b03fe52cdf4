// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/beamforming.hpp"

#include <cstdint>
#include <vector>

namespace simhaps
{
    /// SINR thresholds for decoding the multicast stream and each private stream.
    struct OutageThresholds
    {
        double multicast = 0.0; // γ_0^th
        RVector unicast;        // γ_k^th

        /// γ^th = 2^{R^th} - 1 for every stream.
        static OutageThresholds from_rates(double multicast_rate, const RVector &unicast_rates);
        static OutageThresholds from_rates(double rate, int num_users);
    };

    /// Gain threshold ξ_k: user k is in outage iff ‖g_k‖² < ξ_k.
    /// Returns +inf when p_0 <= γ_0^th p_k (multicast never decodable).
    double outage_gain_threshold(const OutageThresholds &thresholds, int user, const RVector &powers, double noise_power);

    /// Decomposition h_k = a_k + b·h_NLoS used by both approximations.
    struct UserStatistics
    {
        CVector los_mean;      // a_k = √β √(κ/(1+κ)) h_LoS
        double nlos_scale = 0; // b = √β √(1/(1+κ))
    };

    UserStatistics user_statistics(const UserGeometry &user, const SimGeometry &geometry, double rician_factor);

    /// R_C = C Cᴴ with C = B Ψ_1.
    CMatrix effective_covariance(const Cascade &cascade);

    // ---------- gamma moment matching ----------

    struct GammaFit
    {
        double mean = 0.0;     // m_Z
        double variance = 0.0; // v_Z
        double shape = 0.0;    // ϑ = m²/v
        double scale = 0.0;    // ϰ = v/m
        bool degenerate() const { return !(variance > 0.0); }
    };

    GammaFit gamma_moments(const CVector &los_mean, double nlos_scale, const RMatrix &correlation,
                           const CMatrix &effective_cov);

    struct OutageEstimate
    {
        double probability = 0.0;
        bool flagged = false; // degenerate fit or mean-singularity fallback was used
    };

    double outage_gamma(double xi, double shape, double scale);

    /// Falls back to the step function 1{ξ ≥ m_Z} (flagged) when v_Z = 0.
    OutageEstimate outage_gamma(double xi, const GammaFit &fit);

    /// High-SNR form (ξ/ϰ)^ϑ / Γ(ϑ+1).
    double outage_gamma_asymptotic(double xi, double shape, double scale);

    // ---------- saddlepoint approximation ----------

    /// Z = Σ ζ_i |ã_i + q̃_i|², the whitened quadratic form after truncating ζ_i < 1e-12 ζ_max.
    struct SaddlepointContext
    {
        RVector eigenvalues;   // ζ_i
        RVector noncentrality; // μ_i
        double max_eigenvalue() const { return eigenvalues.maxCoeff(); }
        double mean() const;   // C_g'(0) = Σ ζ_i (1 + μ_i)
    };

    SaddlepointContext spa_context(const CVector &los_mean, double nlos_scale, const RMatrix &correlation,
                                   const CMatrix &effective_cov);

    struct CgfValue
    {
        double value = 0.0; // C_g(s)
        double d1 = 0.0;    // C_g'(s)
        double d2 = 0.0;    // C_g''(s)
    };

    /// Throws domain error unless s·ζ_i < 1 for all i.
    CgfValue cgf(double s, const SaddlepointContext &ctx);

    struct SaddlepointSolution
    {
        double point = 0.0; // s★
        int iterations = 0;
        bool mean_singular = false; // ξ within 1e-8 (relative) of the mean; point is 0
    };

    /// Safeguarded Newton on C_g'(s) = ξ; converged when |C_g'(s) - ξ| <= 1e-10 ξ.
    SaddlepointSolution solve_saddlepoint(double xi, const SaddlepointContext &ctx);

    /// Lugannani-Rice CDF Φ(ω) + φ(ω)(1/ω - 1/ϖ), clamped to [0, 1]. Within |ϖ| < 1e-5 of the mean the
    /// removable singularity is replaced by its limit 1/2 + κ₃/(6√(2π)κ₂^{3/2}); flagged when ξ hits the mean.
    OutageEstimate outage_spa(double xi, const SaddlepointContext &ctx);

    // ---------- Monte Carlo oracle ----------

    struct MonteCarloOutage
    {
        RVector probability; // per user
        RVector standard_error; // binomial, per user
        long trials = 0;
    };

    /// Empirical frequency of {γ^M_k <= γ_0^th or γ^U_k <= γ_k^th} over independent draws of all
    /// users' channels, with ZF recomputed per draw and SINRs evaluated with explicit
    /// interference sums. One result per entry of `power_allocations`; all share the same draws.
    std::vector<MonteCarloOutage> outage_montecarlo(const ChannelModel &model, const PhaseConfig &phases,
                                                    const std::vector<RVector> &power_allocations,
                                                    const OutageThresholds &thresholds, double noise_power,
                                                    long trials, std::uint64_t seed);

} // namespace simhaps
