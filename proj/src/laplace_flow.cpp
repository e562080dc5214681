#include "mcsbp/laplace_flow.hpp"

#include "mcsbp/special.hpp"

#include <cmath>
#include <functional>

namespace mcsbp
{
namespace
{
constexpr double kClipTol = 1e-12;
constexpr int kMaxHalvings = 12;

using Rhs = std::function<bool(const TypedVector&, TypedVector&)>;

struct Stepper
{
    Rhs rhs;
    Eigen::Index nonneg;  // leading block that must stay >= 0
    std::size_t clipped = 0;
    std::size_t halvings = 0;

    // Returns false when the leading block goes clearly negative or anything is non-finite.
    bool admissible(TypedVector& y)
    {
        if (!y.allFinite())
            return false;
        for (Eigen::Index i = 0; i < nonneg; ++i)
        {
            if (y(i) >= 0.0)
                continue;
            if (y(i) < -kClipTol)
                return false;
            y(i) = 0.0;
            ++clipped;
        }
        return true;
    }

    bool rk4(const TypedVector& y, double h, TypedVector& out)
    {
        TypedVector k1, k2, k3, k4;
        TypedVector stage = y;
        if (!rhs(stage, k1))
            return false;
        stage = y + 0.5 * h * k1;
        if (!admissible(stage) || !rhs(stage, k2))
            return false;
        stage = y + 0.5 * h * k2;
        if (!admissible(stage) || !rhs(stage, k3))
            return false;
        stage = y + h * k3;
        if (!admissible(stage) || !rhs(stage, k4))
            return false;
        out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        return admissible(out);
    }

    void advance(TypedVector& y, double h, int depth = 0)
    {
        TypedVector next;
        if (rk4(y, h, next))
        {
            y = next;
            return;
        }
        if (depth >= kMaxHalvings)
            throw NumericalError("log-Laplace flow left the nonnegative orthant or blew up; bad mechanism?",
                                 y.cwiseAbs().maxCoeff());
        ++halvings;
        advance(y, 0.5 * h, depth + 1);
        advance(y, 0.5 * h, depth + 1);
    }
};

std::size_t step_count(double t, double dt)
{
    if (!(dt > 0.0))
        throw ModelError("flow: dt must be positive");
    if (!(t >= 0.0))
        throw ModelError("flow: t must be nonnegative");
    return static_cast<std::size_t>(std::llround(t / dt));
}

void check_test_function(const BranchingMechanism& mech, const TypedVector& f)
{
    if (f.size() != mech.dimension())
        throw ModelError("flow: f has wrong dimension");
    if (!is_nonnegative(f) || !f.allFinite())
        throw ModelError("flow: f must be finite and nonnegative");
}

// -psi(u) without the sign check in evaluate_psi; u is admissible here.
TypedVector minus_psi(const BranchingMechanism& mech, const TypedVector& u)
{
    TypedVector out = mech.B().transpose() * u;
    for (Eigen::Index i = 0; i < u.size(); ++i)
        out(i) -= mech.c()(i) * u(i) * u(i) + mech.measure(i).compensated_laplace(u);
    return out;
}
}  // namespace

FlowSolution solve_v(const BranchingMechanism& mech, const TypedVector& f, double t, double dt)
{
    check_test_function(mech, f);
    const std::size_t n = step_count(t, dt);
    const double h = n == 0 ? 0.0 : t / static_cast<double>(n);

    Stepper stepper{[&mech](const TypedVector& u, TypedVector& du) {
                        du = minus_psi(mech, u);
                        return du.allFinite();
                    },
                    mech.dimension()};

    FlowSolution sol;
    sol.f = f;
    sol.step_size = h;
    sol.t_grid.reserve(n + 1);
    sol.v_values.reserve(n + 1);
    TypedVector v = f;
    sol.t_grid.push_back(0.0);
    sol.v_values.push_back(v);
    for (std::size_t k = 1; k <= n; ++k)
    {
        stepper.advance(v, h);
        sol.t_grid.push_back(k == n ? t : h * static_cast<double>(k));
        sol.v_values.push_back(v);
    }
    sol.clipped = stepper.clipped;
    sol.halvings = stepper.halvings;
    return sol;
}

double laplace_functional(const BranchingMechanism& mech, const TypedVector& x, const TypedVector& f, double t,
                          double dt)
{
    if (x.size() != mech.dimension() || !is_nonnegative(x))
        throw ModelError("laplace_functional: x must be nonnegative with dimension d");
    return std::exp(-x.dot(solve_v(mech, f, t, dt).terminal()));
}

double semigroup_check(const BranchingMechanism& mech, const TypedVector& f, double s, double t, double dt)
{
    const TypedVector direct = solve_v(mech, f, t + s, dt).terminal();
    const TypedVector mid = solve_v(mech, f, s, dt).terminal();
    const TypedVector composed = solve_v(mech, mid, t, dt).terminal();
    return (direct - composed).cwiseAbs().maxCoeff();
}

MeanConsistency mean_consistency(const BranchingMechanism& mech, double t, double dt, double eps)
{
    const auto d = mech.dimension();
    MeanConsistency out;
    out.M = mean_matrix(mech.B(), t).M;
    out.derivative = Matrix::Zero(d, d);
    if (t == 0.0)
    {
        out.derivative = Matrix::Identity(d, d);
        return out;
    }
    for (Eigen::Index j = 0; j < d; ++j)
    {
        const TypedVector v1 = solve_v(mech, eps * unit_vector(d, j), t, dt).terminal();
        const TypedVector v2 = solve_v(mech, 2.0 * eps * unit_vector(d, j), t, dt).terminal();
        out.derivative.col(j) = (4.0 * v1 - v2) / (2.0 * eps);
    }
    out.defect = max_abs(out.derivative - out.M);
    return out;
}

ThetaSolution solve_theta(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& f,
                          double t, double dt, double excursion_delta)
{
    check_test_function(mech, f);
    if (spectral.cls != Criticality::supercritical)
        throw ModelError("solve_theta: spectral data must be supercritical");
    const auto d = mech.dimension();
    const std::size_t n = step_count(t, dt);
    const double h = n == 0 ? 0.0 : t / static_cast<double>(n);
    const TypedVector& phi = spectral.phi;
    const Matrix shifted = mech.B().transpose() - spectral.lambda1 * Matrix::Identity(d, d);
    if (excursion_delta < 0.0)
        throw ModelError("solve_theta: excursion_delta must be nonnegative");
    const auto continuous = [excursion_delta](double c, double v) {
        if (excursion_delta == 0.0)
            return 2.0 * c * v;
        return 2.0 * c * special::one_minus_exp(excursion_delta * v) / excursion_delta;
    };

    Stepper stepper{[&](const TypedVector& y, TypedVector& dy) {
                        const TypedVector v = y.head(d);
                        const TypedVector theta = y.tail(d);
                        const TypedVector weighted = phi.cwiseProduct(theta);
                        dy.resize(2 * d);
                        dy.head(d) = minus_psi(mech, v);
                        const TypedVector linear = shifted * weighted;
                        for (Eigen::Index i = 0; i < d; ++i)
                        {
                            const double jump = mech.measure(i).is_zero()
                                                    ? 0.0
                                                    : weighted.dot(mech.measure(i).size_weighted_laplace(v));
                            dy(d + i) = (linear(i) + jump) / phi(i) - continuous(mech.c()(i), v(i)) * theta(i);
                        }
                        return dy.allFinite();
                    },
                    d};

    ThetaSolution sol;
    sol.flow.f = f;
    sol.flow.step_size = h;
    TypedVector y(2 * d);
    y.head(d) = f;
    y.tail(d).setOnes();
    const auto record = [&](double time) {
        sol.t_grid.push_back(time);
        sol.flow.t_grid.push_back(time);
        sol.flow.v_values.push_back(y.head(d));
        sol.theta_values.push_back(y.tail(d));
    };
    record(0.0);
    for (std::size_t k = 1; k <= n; ++k)
    {
        stepper.advance(y, h);
        record(k == n ? t : h * static_cast<double>(k));
    }
    sol.flow.clipped = stepper.clipped;
    sol.flow.halvings = stepper.halvings;
    return sol;
}

double tilted_laplace(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x,
                      const TypedVector& f, double t, double dt, double excursion_delta)
{
    if (x.size() != mech.dimension() || !is_nonnegative(x))
        throw ModelError("tilted_laplace: x must be nonnegative with dimension d");
    const double mass = spectral.phi.dot(x);
    if (!(mass > 0.0))
        throw ModelError("tilted_laplace: x = 0, h-transform undefined");
    const ThetaSolution sol = solve_theta(mech, spectral, f, t, dt, excursion_delta);
    const double weight = sol.terminal().dot(spectral.phi.cwiseProduct(x)) / mass;
    return std::exp(-x.dot(sol.flow.terminal())) * weight;
}
}  // namespace mcsbp
