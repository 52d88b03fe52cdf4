// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace simhaps
{
    SimGeometry SimGeometry::make(int num_layers, int elements_per_layer, int num_antennas, double wavelength,
                                  double element_pitch, double element_dx, double element_dy, double thickness)
    {
        SimGeometry g;
        g.num_layers = num_layers;
        g.elements_per_layer = elements_per_layer;
        g.num_antennas = num_antennas;
        g.wavelength = wavelength;
        g.element_pitch = element_pitch;
        g.element_dx = element_dx;
        g.element_dy = element_dy;
        g.thickness = thickness;

        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(elements_per_layer, 0)))));
        g.grid_x = side;
        g.grid_y = side;
        g.validate();
        return g;
    }

    SimGeometry SimGeometry::reference(double wavelength, int num_layers, int elements_per_layer, int num_antennas)
    {
        return make(num_layers, elements_per_layer, num_antennas, wavelength, wavelength / 2.0, wavelength / 2.0,
                    wavelength / 2.0, 5.0 * wavelength);
    }

    void SimGeometry::validate() const
    {
        if (num_layers < 1)
            throw Error(ErrorKind::config, "SIM needs at least one layer");
        if (elements_per_layer < 1 || grid_x * grid_y != elements_per_layer || grid_x != grid_y)
            throw Error(ErrorKind::config,
                        "elements per layer must be a perfect square, got " + std::to_string(elements_per_layer));
        if (num_antennas < 1)
            throw Error(ErrorKind::config, "at least one transmit antenna is required");
        if (!(wavelength > 0.0) || !(element_pitch > 0.0) || !(element_dx > 0.0) || !(element_dy > 0.0))
            throw Error(ErrorKind::config, "wavelength, pitch and element size must be positive");
        if (!(thickness > 0.0))
            throw Error(ErrorKind::config, "SIM thickness must be positive");
    }

    Eigen::Vector3d SimGeometry::atom_position(int layer, int n) const
    {
        const int ix = n / grid_y;
        const int iy = n % grid_y;
        const double cx = 0.5 * (grid_x - 1);
        const double cy = 0.5 * (grid_y - 1);
        return {(ix - cx) * element_pitch, (iy - cy) * element_pitch, (layer - 1) * layer_spacing()};
    }

    Eigen::Vector3d SimGeometry::antenna_position(int m) const
    {
        const double c = 0.5 * (num_antennas - 1);
        return {(m - c) * 0.5 * wavelength, 0.0, -layer_spacing()};
    }

    cdouble propagation_entry(const Eigen::Vector3d &src, const Eigen::Vector3d &dst, const SimGeometry &geometry)
    {
        const Eigen::Vector3d delta = dst - src;
        const double d = delta.norm();
        if (!(d > 0.0))
            throw Error(ErrorKind::degenerate_geometry, "propagation between coincident positions");

        const double lambda = geometry.wavelength;
        const double cos_chi = std::abs(delta.z()) / d;
        const cdouble radiation(1.0 / (kTwoPi * d), -1.0 / lambda);
        const cdouble phase = std::polar(1.0, kTwoPi * d / lambda);
        return (geometry.element_dx * geometry.element_dy * cos_chi / d) * radiation * phase;
    }

    RMatrix spatial_correlation(const SimGeometry &geometry)
    {
        const int n_el = geometry.elements_per_layer;
        RMatrix r(n_el, n_el);
        for (int n = 0; n < n_el; ++n)
        {
            r(n, n) = 1.0;
            const Eigen::Vector3d pn = geometry.atom_position(1, n);
            for (int m = n + 1; m < n_el; ++m)
            {
                const double x = kTwoPi * (geometry.atom_position(1, m) - pn).norm() / geometry.wavelength;
                const double v = std::sin(x) / x;
                r(n, m) = v;
                r(m, n) = v;
            }
        }
        return r;
    }

    RMatrix regularized_cholesky(const RMatrix &r, double *jitter_used)
    {
        const auto n = r.rows();
        for (double jitter = 1e-10; jitter <= 1e-6 * (1.0 + 1e-9); jitter *= 10.0)
        {
            Eigen::LLT<RMatrix> llt(r + jitter * RMatrix::Identity(n, n));
            if (llt.info() == Eigen::Success)
            {
                if (jitter_used)
                    *jitter_used = jitter;
                return llt.matrixL();
            }
        }
        throw Error(ErrorKind::numerical, "correlation matrix is not positive definite after jitter 1e-6");
    }

    PropagationSet build_propagation_set(const SimGeometry &geometry)
    {
        geometry.validate();
        const int n_el = geometry.elements_per_layer;
        const int m_ant = geometry.num_antennas;

        PropagationSet set;
        for (int l = 2; l <= geometry.num_layers; ++l)
        {
            CMatrix psi(n_el, n_el);
            for (int dst = 0; dst < n_el; ++dst)
                for (int src = 0; src < n_el; ++src)
                    psi(dst, src) =
                        propagation_entry(geometry.atom_position(l - 1, src), geometry.atom_position(l, dst), geometry);
            set.inter_layer.push_back(std::move(psi));
        }

        set.feed.resize(n_el, m_ant);
        for (int dst = 0; dst < n_el; ++dst)
            for (int m = 0; m < m_ant; ++m)
                set.feed(dst, m) = propagation_entry(geometry.antenna_position(m), geometry.atom_position(1, dst), geometry);

        set.correlation = spatial_correlation(geometry);
        set.correlation_factor = regularized_cholesky(set.correlation, &set.correlation_jitter);
        return set;
    }

    CVector steering_vector(double azimuth, double elevation, const SimGeometry &geometry)
    {
        const double k = kTwoPi / geometry.wavelength * geometry.element_pitch;
        const double phase_x = k * std::cos(azimuth) * std::sin(elevation);
        const double phase_y = k * std::sin(azimuth) * std::sin(elevation);

        CVector a(geometry.elements_per_layer);
        for (int ix = 0; ix < geometry.grid_x; ++ix)
            for (int iy = 0; iy < geometry.grid_y; ++iy)
                a(ix * geometry.grid_y + iy) = std::polar(1.0, ix * phase_x + iy * phase_y);
        return a;
    }

    UserGeometry UserGeometry::make(const Eigen::Vector3d &haps_km, const Eigen::Vector3d &user_km, double wavelength,
                                    double tx_gain, double rx_gain)
    {
        UserGeometry u;
        u.haps_km = haps_km;
        u.position_km = user_km;
        const Eigen::Vector3d v = (user_km - haps_km) * 1e3;
        u.distance = v.norm();
        if (!(u.distance > 0.0))
            throw Error(ErrorKind::degenerate_geometry, "user coincides with the HAPS");
        u.elevation = std::acos(std::clamp(-v.z() / u.distance, -1.0, 1.0));
        u.azimuth = std::atan2(v.y(), v.x());
        u.tx_gain = tx_gain;
        u.rx_gain = rx_gain;
        const double fs = wavelength / (4.0 * kPi * u.distance);
        u.path_loss = tx_gain * rx_gain * fs * fs;
        return u;
    }

    UserChannel draw_channel(const UserGeometry &user, const SimGeometry &geometry, const PropagationSet &propagation,
                             double rician_factor, Rng &rng)
    {
        if (!(rician_factor >= 0.0))
            throw Error(ErrorKind::domain, "Rician factor must be non-negative");

        UserChannel ch;
        ch.rician_factor = rician_factor;
        ch.path_loss = user.path_loss;
        ch.los = steering_vector(user.azimuth, user.elevation, geometry);

        ComplexGaussian cn;
        const CVector q = cn.vector(geometry.elements_per_layer, rng);
        ch.nlos = propagation.correlation_factor.cast<cdouble>() * q;

        const double scale = std::sqrt(user.path_loss);
        if (std::isinf(rician_factor))
            ch.composite = scale * ch.los;
        else
        {
            const double w_los = std::sqrt(rician_factor / (1.0 + rician_factor));
            const double w_nlos = std::sqrt(1.0 / (1.0 + rician_factor));
            ch.composite = scale * (w_los * ch.los + w_nlos * ch.nlos);
        }
        ch.estimated = ch.composite;
        ch.error_variance = user.path_loss;
        return ch;
    }

    UserChannel perturb_channel(const UserChannel &channel, double csi_error, Rng &rng)
    {
        if (!(csi_error >= 0.0 && csi_error <= 1.0))
            throw Error(ErrorKind::domain, "CSI error must lie in [0, 1]");

        UserChannel out = channel;
        out.csi_error = csi_error;
        out.error_variance = channel.path_loss;
        out.estimated = channel.composite;
        if (csi_error == 0.0)
            return out;

        ComplexGaussian cn;
        const CVector e = std::sqrt(out.error_variance) * cn.vector(channel.composite.size(), rng);
        out.composite = std::sqrt(1.0 - csi_error * csi_error) * out.estimated + csi_error * e;
        return out;
    }

} // namespace simhaps
