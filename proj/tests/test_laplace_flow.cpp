#include "mcsbp/harness.hpp"
#include "mcsbp/laplace_flow.hpp"
#include "mcsbp/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace mcsbp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
const double kLn2 = std::log(2.0);

TypedVector vec2(double a, double b)
{
    return TypedVector{{a, b}};
}

BranchingMechanism logistic()
{
    MechanismSpec s;
    s.c = TypedVector::Constant(1, 1.0);
    s.B_tilde = Matrix::Constant(1, 1, 1.0);
    s.measures = {LevyMeasure::zero(1)};
    return BranchingMechanism(s);
}

double logistic_v(double t, double f)
{
    return f * std::exp(t) / (1.0 + f * (std::exp(t) - 1.0));
}

MechanismSpec atomic_spec(double diag)
{
    MechanismSpec s;
    s.c = vec2(0.5, 0.5);
    Matrix Bt(2, 2);
    Bt << diag, 0.5, 0.5, diag;
    s.B_tilde = Bt;
    s.measures = {LevyMeasure::atomic({{vec2(1.0, 0.5), 0.2}}), LevyMeasure::atomic({{vec2(0.5, 1.0), 0.2}})};
    return s;
}

BranchingMechanism linear_mechanism()
{
    MechanismSpec s;
    s.c = TypedVector::Zero(2);
    Matrix B(2, 2);
    B << -0.4, 0.7, 0.2, 0.1;
    s.B = B;
    s.measures = {LevyMeasure::zero(2), LevyMeasure::zero(2)};
    return BranchingMechanism(s);
}

// Independent theta solver: implicit trapezoid on (v, theta) with the jump integrals
// summed over atoms directly.
TypedVector trapezoid_theta(const MechanismSpec& spec, const SpectralData& sp, const TypedVector& f, double t,
                            int n)
{
    const Matrix B = convert_drift(*spec.B_tilde, spec.measures);
    const Matrix Bt = B.transpose();
    const auto d = f.size();
    const auto psi = [&](const TypedVector& u) {
        TypedVector out = -(Bt * u);
        for (Eigen::Index i = 0; i < d; ++i)
        {
            out(i) += spec.c(i) * u(i) * u(i);
            for (const auto& a : spec.measures[static_cast<std::size_t>(i)].as_atomic()->atoms)
            {
                const double x = u.dot(a.z);
                out(i) += a.rate * (std::exp(-x) - 1.0 + x);
            }
        }
        return out;
    };
    const auto rhs = [&](const TypedVector& v, const TypedVector& th) {
        const TypedVector pt = sp.phi.cwiseProduct(th);
        const TypedVector lin = (Bt - sp.lambda1 * Matrix::Identity(d, d)) * pt;
        TypedVector out(d);
        for (Eigen::Index i = 0; i < d; ++i)
        {
            TypedVector w = TypedVector::Zero(d);
            for (const auto& a : spec.measures[static_cast<std::size_t>(i)].as_atomic()->atoms)
                w += a.rate * a.z * (std::exp(-v.dot(a.z)) - 1.0);
            out(i) = lin(i) / sp.phi(i) - 2.0 * spec.c(i) * v(i) * th(i) + pt.dot(w) / sp.phi(i);
        }
        return out;
    };
    const double h = t / n;
    TypedVector v = f, th = TypedVector::Ones(d);
    for (int k = 0; k < n; ++k)
    {
        const TypedVector pv = psi(v), rt = rhs(v, th);
        TypedVector v1 = v - h * pv, th1 = th + h * rt;
        for (int it = 0; it < 50; ++it)
        {
            const TypedVector nv = v - 0.5 * h * (pv + psi(v1));
            const TypedVector nth = th + 0.5 * h * (rt + rhs(nv, th1));
            const double change = std::max((nv - v1).cwiseAbs().maxCoeff(), (nth - th1).cwiseAbs().maxCoeff());
            v1 = nv;
            th1 = nth;
            if (change < 1e-15)
                break;
        }
        v = v1;
        th = th1;
    }
    return th;
}
}  // namespace

TEST_CASE("solve_v examples", "[flow]")
{
    const auto m = logistic();
    const auto zero = solve_v(m, TypedVector::Zero(1), 2.0);
    for (const auto& v : zero.v_values)
        CHECK(v(0) == 0.0);
    CHECK_THAT(solve_v(m, TypedVector::Constant(1, 0.5), kLn2).terminal()(0), WithinAbs(2.0 / 3.0, 1e-12));
    for (const auto& v : solve_v(m, TypedVector::Constant(1, 1.0), 3.0).v_values)
        CHECK_THAT(v(0), WithinAbs(1.0, 1e-14));
    CHECK_THROWS_AS(solve_v(m, TypedVector::Constant(1, -0.1), 1.0), ModelError);
}

TEST_CASE("RK4 global error is fourth order against the logistic closed form", "[flow]")
{
    const auto m = logistic();
    const TypedVector f = TypedVector::Constant(1, 3.0);
    std::vector<double> err;
    for (double dt : {0.1, 0.05, 0.025, 0.0125})
        err.push_back(std::abs(solve_v(m, f, 2.0, dt).terminal()(0) - logistic_v(2.0, 3.0)));
    for (std::size_t k = 0; k + 1 < err.size(); ++k)
        CHECK(std::log2(err[k] / err[k + 1]) > 3.7);
}

TEST_CASE("laplace_functional examples and branching property", "[flow]")
{
    const auto m = logistic();
    CHECK(laplace_functional(m, TypedVector::Zero(1), TypedVector::Constant(1, 0.5), 1.0) == 1.0);
    CHECK(laplace_functional(m, TypedVector::Ones(1), TypedVector::Zero(1), 1.0) == 1.0);
    CHECK_THAT(laplace_functional(m, TypedVector::Ones(1), TypedVector::Constant(1, 0.5), kLn2),
               WithinRel(std::exp(-2.0 / 3.0), 1e-12));

    const BranchingMechanism a(atomic_spec(0.0));
    const TypedVector f = vec2(0.5, 2.0), x = vec2(0.3, 1.1), y = vec2(0.9, 0.2);
    const double lx = laplace_functional(a, x, f, 1.5), ly = laplace_functional(a, y, f, 1.5);
    CHECK_THAT(laplace_functional(a, x + y, f, 1.5), WithinAbs(lx * ly, 1e-10));
}

TEST_CASE("v is monotone in f", "[flow]")
{
    const BranchingMechanism a(atomic_spec(-1.0));
    Philox rng(5, 0);
    for (int k = 0; k < 20; ++k)
    {
        const TypedVector f = vec2(3.0 * rng.uniform_open(), 3.0 * rng.uniform_open());
        const TypedVector g = f + vec2(rng.uniform_open(), rng.uniform_open());
        const TypedVector vf = solve_v(a, f, 1.3).terminal(), vg = solve_v(a, g, 1.3).terminal();
        CHECK((vf.array() <= vg.array()).all());
    }
}

TEST_CASE("semigroup_check examples", "[flow]")
{
    const auto m = logistic();
    CHECK(semigroup_check(m, TypedVector::Zero(1), 0.5, 0.5, 1e-3) == 0.0);
    CHECK(semigroup_check(m, TypedVector::Constant(1, 0.5), 0.5, 0.5, 1e-3) <= 1e-8);

    const auto lin = linear_mechanism();
    const TypedVector f = vec2(0.4, 1.2);
    CHECK(semigroup_check(lin, f, 0.37, 0.63, 1e-3) <= 1e-9);
    const TypedVector v = solve_v(lin, f, 1.0).terminal();
    CHECK((v - mean_matrix(lin.B(), 1.0).M * f).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("semigroup defect decays at fourth order on a misaligned split", "[flow]")
{
    const BranchingMechanism a(atomic_spec(0.0));
    const auto est = semigroup_order(a, vec2(1.0, 1.0), 0.37, 0.63, 0.1, 5);
    CHECK(est.order >= 3.5);
}

TEST_CASE("mean_consistency examples", "[flow]")
{
    CHECK(mean_consistency(linear_mechanism(), 1.0, 1e-3).defect <= 1e-7);
    const auto mc = mean_consistency(logistic(), 1.0, 1e-3);
    CHECK_THAT(mc.derivative(0, 0), WithinRel(std::exp(1.0), 1e-8));
    CHECK(mean_consistency(BranchingMechanism(atomic_spec(0.0)), 0.0, 1e-3).defect == 0.0);
    CHECK(mean_consistency(BranchingMechanism(atomic_spec(0.0)), 1.0, 1e-3).defect <= 1e-6);
}

TEST_CASE("solve_theta examples", "[flow]")
{
    const auto m = logistic();
    const auto sp = perron(m.B());
    for (const auto& th : solve_theta(m, sp, TypedVector::Zero(1), 2.0).theta_values)
        CHECK_THAT(th(0), WithinAbs(1.0, 1e-15));
    CHECK_THAT(solve_theta(m, sp, TypedVector::Constant(1, 0.5), kLn2).terminal()(0), WithinAbs(4.0 / 9.0, 1e-10));

    const auto spec = atomic_spec(0.0);
    const BranchingMechanism a(spec);
    const auto sa = perron(a.B());
    for (const TypedVector& f : {vec2(1.0, 1.0), vec2(0.5, 2.0)})
    {
        const TypedVector th = solve_theta(a, sa, f, 1.0).terminal();
        const TypedVector oracle = trapezoid_theta(spec, sa, f, 1.0, 20000);
        CHECK((th - oracle).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((th.array() > 0.0).all());
        CHECK((th.array() <= 1.0).all());
    }
    // subcritical mechanisms have no h-transform
    const BranchingMechanism sub(atomic_spec(-1.0));
    CHECK_THROWS_AS(solve_theta(sub, perron(sub.B()), vec2(1, 1), 1.0), ModelError);
}

TEST_CASE("theta matches the derivative identity phi_i theta_i = e^{-lambda t} d/de v_i(t, f + e phi)", "[flow]")
{
    const BranchingMechanism a(atomic_spec(0.0));
    const auto sp = perron(a.B());
    const TypedVector f = vec2(0.8, 0.3);
    const double t = 1.2, e = 1e-4;
    const TypedVector up = solve_v(a, f + e * sp.phi, t).terminal();
    const TypedVector dn = solve_v(a, f - e * sp.phi, t).terminal();
    const TypedVector deriv = (up - dn) / (2.0 * e);
    const TypedVector th = solve_theta(a, sp, f, t).terminal();
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK_THAT(sp.phi(i) * th(i), WithinAbs(std::exp(-sp.lambda1 * t) * deriv(i), 1e-7));
}

TEST_CASE("tilted_laplace examples and monotonicity", "[flow]")
{
    const auto m = logistic();
    const auto sp = perron(m.B());
    CHECK_THAT(tilted_laplace(m, sp, TypedVector::Ones(1), TypedVector::Zero(1), 1.0), WithinAbs(1.0, 1e-14));
    CHECK_THAT(tilted_laplace(m, sp, TypedVector::Ones(1), TypedVector::Constant(1, 0.5), kLn2),
               WithinRel(std::exp(-2.0 / 3.0) * 4.0 / 9.0, 1e-10));

    const BranchingMechanism a(atomic_spec(0.0));
    const auto sa = perron(a.B());
    const TypedVector x = vec2(1.0, 1.0);
    double prev = 1.0;
    for (double s = 0.0; s <= 3.0; s += 0.25)
    {
        const double cur = tilted_laplace(a, sa, x, vec2(s, 1.0), 1.0);
        CHECK(cur <= prev + 1e-14);
        prev = cur;
    }
}

TEST_CASE("excursion delta bias vanishes as delta shrinks", "[flow]")
{
    const BranchingMechanism a(atomic_spec(0.0));
    const auto sa = perron(a.B());
    const TypedVector x = vec2(1.0, 1.0), f = vec2(1.0, 1.0);
    const double exact = tilted_laplace(a, sa, x, f, 1.0);
    double prev = INFINITY;
    for (double delta : {1e-1, 1e-2, 1e-3, 1e-4})
    {
        const double gap = std::abs(tilted_laplace(a, sa, x, f, 1.0, kDefaultFlowDt, delta) - exact);
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev < 1e-5);
}
