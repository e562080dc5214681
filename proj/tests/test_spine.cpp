#include "mcsbp/ensemble.hpp"
#include "mcsbp/laplace_flow.hpp"
#include "mcsbp/spectral.hpp"
#include "mcsbp/spine.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace mcsbp;
using Catch::Matchers::WithinAbs;

namespace
{
TypedVector vec2(double a, double b)
{
    return TypedVector{{a, b}};
}

Matrix mat2(double a, double b, double c, double d)
{
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

BranchingMechanism supercritical_atomic()
{
    MechanismSpec s;
    s.c = vec2(0.5, 0.5);
    s.B_tilde = mat2(0.0, 0.5, 0.5, 0.0);
    s.measures = {LevyMeasure::atomic({{vec2(1.0, 0.5), 0.2}}), LevyMeasure::atomic({{vec2(0.5, 1.0), 0.2}})};
    return BranchingMechanism(s);
}

Matrix random_metzler(std::uint64_t seed, int d)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> off(0.05, 1.0), diag(-1.0, 1.0);
    Matrix B(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            B(i, j) = i == j ? diag(g) : off(g);
    return B;
}

bool within(double a, double sa, double b, double sb)
{
    return std::abs(a - b) <= 3.0 * std::sqrt(sa * sa + sb * sb);
}
}  // namespace

TEST_CASE("spine_generator examples", "[spine]")
{
    const Matrix B = mat2(0, 1, 1, 0);
    const auto L = spine_generator(B, perron(B)).L;
    CHECK(L.isApprox(mat2(-1, 1, 1, -1), 1e-12));

    Matrix b(1, 1);
    b << 0.3;
    CHECK(spine_generator(b, perron(b)).L(0, 0) == 0.0);

    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const Matrix R = random_metzler(seed, 3);
        const auto sp = perron(R);
        const auto chain = spine_generator(R, sp);
        CHECK(chain.L.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((chain.initial_law - sp.phi).cwiseAbs().maxCoeff() <= 1e-15);
        // stationary law is phi o phi_hat (which sums to <phi, phi_hat> = 1)
        const TypedVector pi = stationary_law(chain);
        CHECK((pi - sp.phi.cwiseProduct(sp.phi_hat)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("nu_measure examples", "[spine]")
{
    const auto m = supercritical_atomic();
    CHECK(nu_measure(m, 0, 0).zero_weight() == 1.0);

    // mu_1 = {(0,1) rate 0.3} and B^T_12 = B_21 = B~_21 + 0.3 = 0.6
    MechanismSpec s;
    s.c = vec2(0.5, 0.5);
    s.B_tilde = mat2(0.0, 0.4, 0.3, 0.0);
    s.measures = {LevyMeasure::atomic({{vec2(0.0, 1.0), 0.3}}), LevyMeasure::zero(2)};
    const BranchingMechanism n(s);
    REQUIRE(n.B()(1, 0) == Catch::Approx(0.6).epsilon(1e-15));
    const NuLaw nu = nu_measure(n, 0, 1);
    CHECK_THAT(nu.zero_weight(), WithinAbs(0.5, 1e-15));
    CHECK(nu.zero_weight() + nu.immigrant_weight() == 1.0);
    Philox rng(1, 0);
    int hits = 0;
    const int draws = 20000;
    for (int k = 0; k < draws; ++k)
    {
        const TypedVector z = nu.sample(rng, 1e-3);
        if (!z.isZero(0.0))
        {
            REQUIRE(z == vec2(0.0, 1.0));
            ++hits;
        }
    }
    CHECK(std::abs(hits / double(draws) - 0.5) <= 3.0 * std::sqrt(0.25 / draws));

    // mu_2 = 0: nothing to size-bias
    CHECK(nu_measure(n, 1, 0).zero_weight() == 1.0);
}

TEST_CASE("nu_measure mass is exact for atomic measures", "[spine]")
{
    const auto m = supercritical_atomic();
    // nu_{1,2}: int z_2 mu_1 = 0.5 * 0.2 = 0.1 over B^T_12 = B_21 = 0.6
    CHECK(nu_measure(m, 0, 1).immigrant_weight() == Catch::Approx(0.1 / 0.6).epsilon(1e-15));
    CHECK(nu_measure(m, 1, 0).immigrant_weight() == Catch::Approx(0.1 / 0.6).epsilon(1e-15));
}

TEST_CASE("Gamma in the deterministic linear case", "[spine]")
{
    MechanismSpec s;
    s.c = TypedVector::Zero(2);
    s.B = mat2(0.2, 0.5, 0.3, 0.1);
    s.measures = {LevyMeasure::zero(2), LevyMeasure::zero(2)};
    const BranchingMechanism m(s);
    const auto sp = perron(m.B());
    SimConfig cfg;
    cfg.horizon = 1.0;
    Philox rng(3, 0);
    const TypedVector x0 = vec2(1.0, 2.0);
    const auto g = simulate_gamma(m, sp, x0, cfg, 1e-3, rng);
    CHECK(g.record.events.empty());
    CHECK(g.record.spine.size() >= 1);
    Philox r2(3, 0);
    const auto p = simulate_path(m, sp, x0, cfg, r2);
    CHECK((g.Gamma.back() - p.terminal()).cwiseAbs().maxCoeff() <= 1e-12);
    const TypedVector exact = mean_matrix(m.B(), 1.0).M.transpose() * x0;
    CHECK((g.Gamma.back() - exact).cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("conditional Gamma Laplace with a hand-made record", "[spine]")
{
    const auto m = supercritical_atomic();
    const TypedVector f = vec2(1.0, 0.5), x0 = vec2(1.0, 1.0);
    const auto flow = solve_v(m, f, 1.0);
    SpineRecord rec;
    rec.spine = {{0.0, 0}};
    CHECK_THAT(conditional_gamma_laplace(rec, x0, flow), WithinAbs(laplace_functional(m, x0, f, 1.0), 1e-14));
    rec.events.push_back({0.4, ImmigrationKind::jump, 0, vec2(0.3, 0.0)});
    const double expect = std::exp(-x0.dot(flow.terminal()) - 0.3 * solve_v(m, f, 0.6).terminal()(0));
    CHECK_THAT(conditional_gamma_laplace(rec, x0, flow), WithinAbs(expect, 1e-12));
}

TEST_CASE("first moment of Gamma matches E[W_t^2] / W_0", "[spine]")
{
    const auto m = supercritical_atomic();
    const auto sp = perron(m.B());
    const TypedVector x0 = vec2(1.0, 1.0);
    SimConfig cfg;
    cfg.horizon = 1.0;
    cfg.record_events = false;
    const double W0 = sp.phi.dot(x0);

    const std::size_t n = 3000;
    std::vector<double> z(n), w2(4 * n);
    for (std::size_t k = 0; k < n; ++k)
    {
        Philox rng(42, k);
        z[k] = simulate_gamma(m, sp, x0, cfg, 1e-3, rng).Z.back();
    }
    for (std::size_t k = 0; k < w2.size(); ++k)
    {
        Philox rng(43, k);
        const double w = simulate_path(m, sp, x0, cfg, rng).W.back();
        w2[k] = w * w / W0;
    }
    const Estimate ez = estimate(z), ew = estimate(w2);
    INFO("Z " << ez.mean << " +- " << ez.se << ", W^2/W0 " << ew.mean << " +- " << ew.se);
    CHECK(within(ez.mean, ez.se, ew.mean, ew.se));
}

TEST_CASE("Gamma Laplace mean matches tilted_laplace", "[spine]")
{
    const auto m = supercritical_atomic();
    const auto sp = perron(m.B());
    const TypedVector x0 = vec2(1.0, 1.0), f = vec2(1.0, 1.0);
    SimConfig cfg;
    cfg.horizon = 1.0;
    const auto est = gamma_laplace_estimate(m, sp, x0, f, 1.0, 3000, 20000, cfg, 1e-3);
    const double oracle = tilted_laplace(m, sp, x0, f, 1.0);
    CHECK(std::abs(est.simulated.mean - oracle) <= 3.0 * est.simulated.se);
    const double delta_oracle = tilted_laplace(m, sp, x0, f, 1.0, kDefaultFlowDt, 1e-3);
    CHECK(std::abs(est.conditional.mean - delta_oracle) <= 3.0 * est.conditional.se);

    const Estimate w = weighted_tilt_estimate(m, sp, x0, f, 1.0, 10000, cfg);
    CHECK(within(w.mean, w.se, est.simulated.mean, est.simulated.se));
    CHECK(std::abs(w.mean - oracle) <= 3.0 * w.se);
}

TEST_CASE("weighted_tilt_estimate examples", "[spine]")
{
    const auto m = supercritical_atomic();
    const auto sp = perron(m.B());
    SimConfig cfg;
    cfg.horizon = 1.0;
    const Estimate one = weighted_tilt_estimate(m, sp, vec2(1.0, 1.0), TypedVector::Zero(2), 1.0, 5000, cfg);
    CHECK(std::abs(one.mean - 1.0) <= 3.0 * one.se);

    MechanismSpec s;
    s.c = TypedVector::Constant(1, 1.0);
    s.B_tilde = Matrix::Constant(1, 1, 1.0);
    s.measures = {LevyMeasure::zero(1)};
    const BranchingMechanism lg(s);
    SimConfig c2;
    c2.horizon = std::log(2.0);
    const Estimate e = weighted_tilt_estimate(lg, perron(lg.B()), TypedVector::Ones(1), TypedVector::Constant(1, 0.5),
                                              std::log(2.0), 10000, c2);
    CHECK(std::abs(e.mean - std::exp(-2.0 / 3.0) * 4.0 / 9.0) <= 3.0 * e.se);
    CHECK_THROWS_AS(weighted_tilt_estimate(m, sp, TypedVector::Zero(2), TypedVector::Zero(2), 1.0, 10, cfg),
                    ModelError);
}

TEST_CASE("spine records are reproducible and sorted", "[spine]")
{
    const auto m = supercritical_atomic();
    const auto sp = perron(m.B());
    Philox a(5, 3), b(5, 3);
    const auto ra = sample_spine_record(m, sp, vec2(1.0, 1.0), 2.0, 1e-2, 1e-3, a);
    const auto rb = sample_spine_record(m, sp, vec2(1.0, 1.0), 2.0, 1e-2, 1e-3, b);
    REQUIRE(ra.events.size() == rb.events.size());
    for (std::size_t k = 0; k < ra.events.size(); ++k)
    {
        CHECK(ra.events[k].time == rb.events[k].time);
        CHECK(ra.events[k].mass == rb.events[k].mass);
        if (k > 0)
            CHECK(ra.events[k - 1].time <= ra.events[k].time);
    }
    CHECK(ra.spine.front().first == 0.0);
    // continuous immigration: mass delta e_eta at rate 2 c / delta; over t = 2 expect about 200 events
    std::size_t cont = 0;
    for (const auto& e : ra.events)
        if (e.kind == ImmigrationKind::continuous)
        {
            ++cont;
            CHECK_THAT(e.mass.sum(), WithinAbs(1e-2, 1e-15));
        }
    CHECK(cont > 100);
    CHECK(cont < 300);
    Philox c(5, 3);
    CHECK_THROWS_AS(sample_spine_record(m, sp, vec2(1.0, 1.0), 2.0, 1e-2, 1e-3, c, 10), NumericalError);
}
