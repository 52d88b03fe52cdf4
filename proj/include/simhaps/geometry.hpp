// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/common.hpp"

#include <vector>

namespace simhaps
{
    /// Layout of the stacked metasurface and the feeding antenna array.
    ///
    /// Layer l (1-based) sits at axial position z = (l-1)·d_SIM; the antennas form a
    /// uniform linear array along x with pitch λ/2, centered on the axis at z = -d_SIM.
    /// Meta-atoms are indexed row-major over (x, y): n = ix·N_y + iy.
    struct SimGeometry
    {
        int num_layers = 3;          // L
        int elements_per_layer = 25; // N
        int grid_x = 5;              // N_x
        int grid_y = 5;              // N_y
        int num_antennas = 5;        // M
        double wavelength = 0.0;     // λ [m]
        double element_pitch = 0.0;  // d_e [m]
        double element_dx = 0.0;     // d_x [m]
        double element_dy = 0.0;     // d_y [m]
        double thickness = 0.0;      // T_SIM [m]

        /// Builds and validates a geometry; N must be a perfect square.
        static SimGeometry make(int num_layers, int elements_per_layer, int num_antennas, double wavelength,
                                double element_pitch, double element_dx, double element_dy, double thickness);

        /// Reference layout at the given wavelength: d_e = d_x = d_y = λ/2, T_SIM = 5λ.
        static SimGeometry reference(double wavelength, int num_layers = 3, int elements_per_layer = 25,
                                     int num_antennas = 5);

        double layer_spacing() const { return thickness / num_layers; } // d_SIM

        Eigen::Vector3d atom_position(int layer, int n) const; // layer is 1-based
        Eigen::Vector3d antenna_position(int m) const;

        void validate() const;
    };

    /// Deterministic propagation inside the SIM plus the meta-atom spatial correlation.
    struct PropagationSet
    {
        std::vector<CMatrix> inter_layer; // Ψ_2 … Ψ_L (index 0 holds Ψ_2), each N×N
        CMatrix feed;                     // Ψ_1, N×M
        RMatrix correlation;              // R, N×N, unit diagonal
        RMatrix correlation_factor;       // lower-triangular F₀ with R + jitter·I = F₀F₀ᵀ
        double correlation_jitter = 0.0;  // jitter actually applied before factorization

        int num_layers() const { return static_cast<int>(inter_layer.size()) + 1; }

        /// Ψ_l for l = 2..L
        const CMatrix &layer(int l) const { return inter_layer.at(static_cast<std::size_t>(l - 2)); }
    };

    /// Rayleigh-Sommerfeld coupling coefficient from `src` to `dst`. cos χ is the axial
    /// separation over the Euclidean distance.
    cdouble propagation_entry(const Eigen::Vector3d &src, const Eigen::Vector3d &dst, const SimGeometry &geometry);

    PropagationSet build_propagation_set(const SimGeometry &geometry);

    /// sinc-shaped correlation R_{n,n'} = sin(2πd/λ)/(2πd/λ) over in-plane atom distances.
    RMatrix spatial_correlation(const SimGeometry &geometry);

    /// Cholesky of R with escalating diagonal jitter 1e-10, 1e-9, … 1e-6; throws numerical error after.
    /// Returns the lower factor and writes the jitter used.
    RMatrix regularized_cholesky(const RMatrix &r, double *jitter_used = nullptr);

    /// Planar-array steering vector a(φ_x, φ_y) = a_x ⊗ a_y, unit-modulus entries.
    CVector steering_vector(double azimuth, double elevation, const SimGeometry &geometry);

    /// Large-scale geometry of one ground user relative to the HAPS.
    struct UserGeometry
    {
        Eigen::Vector3d haps_km = Eigen::Vector3d::Zero();
        Eigen::Vector3d position_km = Eigen::Vector3d::Zero();
        double distance = 0.0;  // d_k [m]
        double azimuth = 0.0;   // φ_{k,x}: direction in the ground plane [rad]
        double elevation = 0.0; // φ_{k,y}: polar angle from nadir broadside [rad]
        double tx_gain = 1.0;   // G_t (linear)
        double rx_gain = 1.0;   // G_r (linear)
        double path_loss = 0.0; // β_k = G_t G_r (λ / 4π d_k)²

        static UserGeometry make(const Eigen::Vector3d &haps_km, const Eigen::Vector3d &user_km, double wavelength,
                                 double tx_gain, double rx_gain);
    };

    /// One realization of the SIM-to-user channel.
    struct UserChannel
    {
        double rician_factor = 0.0; // κ (linear, +inf for pure LoS)
        double path_loss = 0.0;     // β_k
        CVector los;                // h_LoS, unit-modulus entries
        CVector nlos;               // h_NLoS ~ CN(0, R)
        CVector composite;          // true channel h_k
        double csi_error = 0.0;     // ε
        double error_variance = 0.0; // σ²_{e,k}
        CVector estimated;          // h̃_k (equals `composite` when ε = 0)
    };

    /// Everything needed to draw channels for a fixed deployment.
    struct ChannelModel
    {
        SimGeometry geometry;
        PropagationSet propagation;
        std::vector<UserGeometry> users;
        double rician_factor = 4.0;

        int num_users() const { return static_cast<int>(users.size()); }
    };

    /// Draws h_k = √β (√(κ/(1+κ)) h_LoS + √(1/(1+κ)) F₀ q) with q ~ CN(0, I).
    UserChannel draw_channel(const UserGeometry &user, const SimGeometry &geometry, const PropagationSet &propagation,
                             double rician_factor, Rng &rng);

    /// Treats `channel.composite` as the estimate h̃ and produces the true channel
    /// h = √(1-ε²) h̃ + ε e with e ~ CN(0, σ²_e I), σ²_e = β_k.
    UserChannel perturb_channel(const UserChannel &channel, double csi_error, Rng &rng);

} // namespace simhaps
