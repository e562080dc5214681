#pragma once

#include <functional>

namespace mcsbp::special
{
/// Absolute and relative targets used by every adaptive integral in the library.
inline constexpr double kQuadAbsTol = 1e-10;
inline constexpr double kQuadRelTol = 1e-8;

/// Adaptive Gauss-Kronrod on [a, b]; either bound may be infinite.
/// Throws NumericalError when the error estimate misses both tolerances.
double integrate(const std::function<double(double)>& f, double a, double b);

/// Upper incomplete gamma Gamma(a, x) for any real a and x > 0.
double upper_gamma(double a, double x);

/// Integral of exp(-a s) s^(-gamma) over (s0, inf), s0 > 0, a >= 0.
/// Returns +inf when the integral diverges (a == 0 and gamma <= 1).
double power_log_tail(double a, double gamma, double s0);

/// Integral of exp(b s) s^(-gamma) over (s_lo, s_hi), 0 < s_lo <= s_hi, any real b.
double power_log_segment(double b, double gamma, double s_lo, double s_hi);

/// exp(-x) - 1 + x without cancellation for small x.
double compensated_exp(double x);

/// 1 - exp(-x).
double one_minus_exp(double x);
}  // namespace mcsbp::special
