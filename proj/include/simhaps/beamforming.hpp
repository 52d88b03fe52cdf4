// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/geometry.hpp"

#include <vector>

namespace simhaps
{
    /// Phase shifts of every meta-atom, stored as an L×N matrix with entries in [0, 2π).
    class PhaseConfig
    {
    public:
        PhaseConfig() = default;

        /// Wraps every entry into [0, 2π).
        explicit PhaseConfig(RMatrix phases);

        static PhaseConfig constant(int num_layers, int elements_per_layer, double value);
        static PhaseConfig random(int num_layers, int elements_per_layer, Rng &rng);

        int num_layers() const { return static_cast<int>(phases_.rows()); }
        int elements_per_layer() const { return static_cast<int>(phases_.cols()); }

        const RMatrix &phases() const { return phases_; }
        double operator()(int layer, int n) const { return phases_(layer - 1, n); } // layer is 1-based

        /// diag(Θ_l) = exp(jθ^l)
        CVector layer_diagonal(int layer) const;

    private:
        RMatrix phases_;
    };

    /// SIM cascade B = Θ_L Ψ_L ⋯ Θ_2 Ψ_2 Θ_1 together with its per-layer split
    /// B = B_{l,1} Θ_l B_{l,2}, computed once with prefix/suffix products.
    struct Cascade
    {
        CMatrix transfer;             // B, N×N
        CMatrix effective;            // C = B Ψ_1, N×M
        std::vector<CMatrix> outer;   // B_{l,1} = Θ_L Ψ_L ⋯ Θ_{l+1} Ψ_{l+1}  (index l-1)
        std::vector<CMatrix> inner;   // B_{l,2} = Ψ_l Θ_{l-1} ⋯ Ψ_2 Θ_1      (index l-1)
        std::vector<CVector> diagonals; // diag(Θ_l) (index l-1)

        int num_layers() const { return static_cast<int>(diagonals.size()); }
    };

    Cascade cascade(const PhaseConfig &phases, const PropagationSet &propagation);

    /// Equivalent channels g_k = h_kᴴ B Ψ_1 stacked as the rows of a K×M matrix.
    CMatrix equivalent_channels(const std::vector<CVector> &channels, const Cascade &cascade);

    /// ZF unicast directions (columns of W = Gᴴ(GGᴴ)⁻¹D) and the multicast direction w̄_0 = Σ w̄_r.
    struct Precoder
    {
        CMatrix unicast;   // M×K
        CVector multicast; // M
    };

    /// Throws ill-conditioned error when cond(GGᴴ) > 1e12 or K > M.
    Precoder zf_precode(const CMatrix &g);

    /// Equal split p_k = P/(K+1), k = 0..K
    RVector equal_power_split(double total_power, int num_users);

    /// SINRs and rates of one link evaluation. Index 0 of `powers` is the multicast stream.
    struct LinkRates
    {
        RVector sinr_multicast; // γ_k^M, k = 1..K (stored 0-based)
        RVector sinr_unicast;   // γ_k^U
        RVector unicast_rates;  // R_k
        double multicast_rate = 0.0; // R_0 = min_k log2(1 + γ_k^M)
        int weakest_user = 0;   // k' attaining the minimum (lowest index on ties)

        double sum_rate() const { return multicast_rate + unicast_rates.sum(); }
    };

    /// Closed-form ZF SINRs from the gains ‖g_k‖²:
    /// γ^M = ‖g‖²p_0 / (‖g‖²p_k + N_0),  γ^U = ‖g‖²p_k / N_0.
    LinkRates sinr_rates(const RVector &gains, const RVector &powers, double noise_power);

    /// Imperfect-CSI SINRs computed from estimated-channel gains ‖g̃_k‖², including the
    /// error leakage ε²σ²_{e,k} Σ_r ‖BΨ_1w̄_r‖² p_r. `beam_energy(r)` holds ‖BΨ_1w̄_r‖², r = 0..K.
    LinkRates sinr_rates_imperfect(const RVector &gains, const RVector &powers, double noise_power, double csi_error,
                                   const RVector &error_variance, const RVector &beam_energy);

    /// ‖C w̄_r‖² for r = 0..K (multicast first).
    RVector beam_energies(const Cascade &cascade, const Precoder &precoder);

    /// General SINRs from arbitrary precoders, interference sums kept explicitly:
    /// γ^M_k = |g_k w̄_0|²p_0 / (Σ_r |g_k w̄_r|² p_r + N_0),
    /// γ^U_k = |g_k w̄_k|²p_k / (Σ_{r≠k} |g_k w̄_r|² p_r + N_0).
    LinkRates sinr_rates_general(const CMatrix &g, const Precoder &precoder, const RVector &powers, double noise_power);

    /// ∂‖g_k‖²/∂θ_n^l for a single (l, n):  2 Re{ j e^{jθ} [hᴴB_{l,1}]_n [B_{l,2}Ψ_1 g_kᴴ]_n }.
    double grad_gain(const Cascade &cascade, const PropagationSet &propagation, const CVector &channel, int layer, int n);

    /// Full L×N gradient of ‖g_k‖² for one user, O(L N²).
    RMatrix grad_gain_all(const Cascade &cascade, const PropagationSet &propagation, const CVector &channel);

} // namespace simhaps
