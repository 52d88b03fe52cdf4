// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/special.hpp"
#include "simhaps/common.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>

namespace simhaps::special
{
    namespace
    {
        constexpr int kMaxIter = 10000;
        constexpr double kEps = 1e-16;
        constexpr double kTiny = 1e-300;

        double lower_series(double a, double x, double log_prefix)
        {
            double ap = a;
            double term = 1.0 / a;
            double sum = term;
            for (int n = 0; n < kMaxIter; ++n)
            {
                ap += 1.0;
                term *= x / ap;
                sum += term;
                if (std::abs(term) < std::abs(sum) * kEps)
                    return sum * std::exp(log_prefix);
            }
            throw Error(ErrorKind::numerical, "incomplete gamma series did not converge");
        }

        // Q(a, x) via modified Lentz
        double upper_fraction(double a, double x, double log_prefix)
        {
            double b = x + 1.0 - a;
            double c = 1.0 / kTiny;
            double d = 1.0 / b;
            double h = d;
            for (int i = 1; i < kMaxIter; ++i)
            {
                const double an = -i * (i - a);
                b += 2.0;
                d = an * d + b;
                if (std::abs(d) < kTiny)
                    d = kTiny;
                c = b + an / c;
                if (std::abs(c) < kTiny)
                    c = kTiny;
                d = 1.0 / d;
                const double delta = d * c;
                h *= delta;
                if (std::abs(delta - 1.0) < kEps)
                    return std::exp(log_prefix) * h;
            }
            throw Error(ErrorKind::numerical, "incomplete gamma continued fraction did not converge");
        }
    } // namespace

    double gamma_p(double a, double x)
    {
        if (!(a > 0.0))
            throw Error(ErrorKind::domain, "gamma_p requires a > 0");
        if (std::isnan(x))
            throw Error(ErrorKind::domain, "gamma_p argument is NaN");
        if (x <= 0.0)
            return 0.0;
        if (std::isinf(x))
            return 1.0;

        const double log_prefix = a * std::log(x) - x - std::lgamma(a);
        if (x < a + 1.0)
            return std::min(1.0, lower_series(a, x, log_prefix));
        return std::max(0.0, 1.0 - upper_fraction(a, x, log_prefix));
    }

    double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

    double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi); }

} // namespace simhaps::special
