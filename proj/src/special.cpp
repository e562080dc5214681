#include "mcsbp/special.hpp"

#include "mcsbp/types.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/expint.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>

namespace mcsbp::special
{
namespace
{
constexpr double kInf = std::numeric_limits<double>::infinity();

// Legendre continued fraction for Gamma(a, x), modified Lentz. Good for x > 1.
double upper_gamma_cf(double a, double x)
{
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i)
    {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15)
            return std::exp(-x + a * std::log(x)) * h;
    }
    throw NumericalError("upper_gamma: continued fraction did not converge", std::abs(h));
}
}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b)
{
    if (a == b)
        return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, a, b, 20, 1e-11, &err, &l1);
    if (!std::isfinite(value))
        throw NumericalError("quadrature produced a non-finite value", err);
    if (err > std::max(kQuadAbsTol, kQuadRelTol * std::abs(value)))
        throw NumericalError("quadrature did not converge", err);
    return value;
}

double upper_gamma(double a, double x)
{
    if (!(x > 0.0))
        throw ModelError("upper_gamma requires x > 0");
    if (a > 0.0)
        return boost::math::tgamma(a, x);
    if (a == 0.0)
        return boost::math::expint(1, x);
    if (x > 1.0)
        return upper_gamma_cf(a, x);
    // Gamma(a, x) = (Gamma(a + 1, x) - x^a e^{-x}) / a
    return (upper_gamma(a + 1.0, x) - std::exp(a * std::log(x) - x)) / a;
}

double power_log_tail(double a, double gamma, double s0)
{
    if (!(s0 > 0.0))
        throw ModelError("power_log_tail requires s0 > 0");
    if (a < 0.0)
        return kInf;
    if (a == 0.0)
    {
        if (gamma <= 1.0)
            return kInf;
        return std::pow(s0, 1.0 - gamma) / (gamma - 1.0);
    }
    if (gamma == 0.0)
        return std::exp(-a * s0) / a;
    const double x = a * s0;
    if (x > 700.0)
        return 0.0;
    return std::pow(a, gamma - 1.0) * upper_gamma(1.0 - gamma, x);
}

double power_log_segment(double b, double gamma, double s_lo, double s_hi)
{
    if (!(s_lo > 0.0) || s_hi < s_lo)
        throw ModelError("power_log_segment requires 0 < s_lo <= s_hi");
    if (s_lo == s_hi)
        return 0.0;
    if (b < 0.0 && gamma != 0.0)
        return power_log_tail(-b, gamma, s_lo) - power_log_tail(-b, gamma, s_hi);
    if (b == 0.0)
    {
        if (gamma == 1.0)
            return std::log(s_hi / s_lo);
        return (std::pow(s_hi, 1.0 - gamma) - std::pow(s_lo, 1.0 - gamma)) / (1.0 - gamma);
    }
    if (gamma == 0.0)
        return (std::exp(b * s_hi) - std::exp(b * s_lo)) / b;
    return integrate([=](double s) { return std::exp(b * s) * std::pow(s, -gamma); }, s_lo, s_hi);
}

double compensated_exp(double x)
{
    if (std::abs(x) < 1e-3)
    {
        const double x2 = x * x;
        return x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0);
    }
    return std::expm1(-x) + x;
}

double one_minus_exp(double x)
{
    return -std::expm1(-x);
}
}  // namespace mcsbp::special
