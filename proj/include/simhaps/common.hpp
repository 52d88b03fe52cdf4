// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace simhaps
{
    using cdouble = std::complex<double>;
    using CMatrix = Eigen::MatrixXcd;
    using CVector = Eigen::VectorXcd;
    using RMatrix = Eigen::MatrixXd;
    using RVector = Eigen::VectorXd;

    inline constexpr double kPi = std::numbers::pi;
    inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
    inline constexpr double kSpeedOfLight = 299792458.0;

    // Error categories map one-to-one onto CLI exit codes (see exit_code()).
    enum class ErrorKind
    {
        config,              // malformed or out-of-range configuration
        domain,              // argument outside the mathematical domain of an operation
        degenerate_geometry, // coincident positions, empty grids
        numerical,           // factorization/convergence failures
        ill_conditioned,     // ZF Gram matrix too close to singular
        infeasible           // QoS constraints cannot be met
    };

    class Error : public std::runtime_error
    {
    public:
        Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
        ErrorKind kind() const noexcept { return kind_; }

    private:
        ErrorKind kind_;
    };

    // 0 success, 1 config error, 2 numerical failure, 3 infeasible scenario
    inline int exit_code(ErrorKind kind)
    {
        switch (kind)
        {
        case ErrorKind::config:
        case ErrorKind::domain:
            return 1;
        case ErrorKind::infeasible:
            return 3;
        default:
            return 2;
        }
    }

    using Rng = std::mt19937_64;

    /// SplitMix64 finalizer; used to derive independent per-task seeds from a master seed.
    inline std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    /// Counter-based stream seed: identical (master, a, b, c) always yields the same stream.
    inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a = 0, std::uint64_t b = 0,
                                     std::uint64_t c = 0)
    {
        std::uint64_t s = splitmix64(master);
        s = splitmix64(s ^ (a + 0x1000193ULL));
        s = splitmix64(s ^ (b + 0x2000383ULL));
        return splitmix64(s ^ (c + 0x30005C9ULL));
    }

    /// Circularly-symmetric complex Gaussian CN(0, 1) sampler. Keep one per stream; the
    /// underlying normal distribution caches the second variate of each polar pair.
    class ComplexGaussian
    {
    public:
        cdouble operator()(Rng &rng)
        {
            const double re = normal_(rng);
            const double im = normal_(rng);
            return {re, im};
        }

        CVector vector(Eigen::Index n, Rng &rng)
        {
            CVector v(n);
            for (Eigen::Index i = 0; i < n; ++i)
                v(i) = (*this)(rng);
            return v;
        }

    private:
        std::normal_distribution<double> normal_{0.0, std::numbers::sqrt2 / 2.0};
    };

    inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
    inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

    /// Wraps an angle into [0, 2π).
    inline double wrap_phase(double theta)
    {
        double w = std::fmod(theta, kTwoPi);
        if (w < 0.0)
            w += kTwoPi;
        if (w >= kTwoPi) // fmod of tiny negatives can round up to 2π
            w = 0.0;
        return w;
    }

} // namespace simhaps
