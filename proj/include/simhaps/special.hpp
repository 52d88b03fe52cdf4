// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

namespace simhaps::special
{
    /// Regularized lower incomplete gamma P(a, x) = γ(a, x)/Γ(a).
    /// Series for x < a+1, Lentz continued fraction for the complement otherwise.
    double gamma_p(double a, double x);

    /// Standard normal CDF Φ and PDF φ.
    double normal_cdf(double x);
    double normal_pdf(double x);

} // namespace simhaps::special
