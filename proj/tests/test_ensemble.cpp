#include "mcsbp/ensemble.hpp"
#include "mcsbp/spectral.hpp"

#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

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

BranchingMechanism literal_reference()
{
    MechanismSpec s;
    s.c = vec2(0.5, 0.5);
    s.B_tilde = mat2(-1.0, 0.5, 0.5, -1.0);
    s.measures = {LevyMeasure::atomic({{vec2(1.0, 0.5), 0.2}}), LevyMeasure::atomic({{vec2(0.5, 1.0), 0.2}})};
    return BranchingMechanism(s);
}
}  // namespace

TEST_CASE("estimate and quantile", "[ensemble]")
{
    const Estimate e = estimate({1.0, 2.0, 3.0, 4.0});
    CHECK(e.mean == 2.5);
    CHECK_THAT(e.se, WithinAbs(std::sqrt(5.0 / 3.0) / 2.0, 1e-15));
    CHECK(e.n == 4);
    // numpy.quantile([3, 1, 4, 1, 5], p)
    const std::vector<double> d{3, 1, 4, 1, 5};
    CHECK(quantile(d, 0.0) == 1.0);
    CHECK(quantile(d, 0.5) == 3.0);
    CHECK_THAT(quantile(d, 0.3), WithinAbs(1.4, 1e-15));
    CHECK_THAT(quantile(d, 0.9), WithinAbs(4.6, 1e-15));
    CHECK(std::isnan(quantile({}, 0.5)));
}

TEST_CASE("worker_count honours MCSBP_THREADS", "[ensemble]")
{
    CHECK(worker_count(3) == 3);
    ::setenv("MCSBP_THREADS", "5", 1);
    CHECK(worker_count() == 5);
    ::unsetenv("MCSBP_THREADS");
    CHECK(worker_count() >= 1);
}

TEST_CASE("parallel_for visits every index and rethrows the lowest failure", "[ensemble]")
{
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k]++; });
    for (const auto& h : hits)
        CHECK(h.load() == 1);
    try
    {
        parallel_for(100, 4, [](std::size_t k) {
            if (k == 17 || k == 60)
                throw std::runtime_error(std::to_string(k));
        });
        FAIL("expected an exception");
    }
    catch (const std::runtime_error& e)
    {
        CHECK(std::string(e.what()) == "17");
    }
}

TEST_CASE("deterministic mechanism gives zero variance", "[ensemble]")
{
    MechanismSpec s;
    s.c = TypedVector::Zero(2);
    s.B = mat2(0.1, 0.2, 0.2, 0.1);
    s.measures = {LevyMeasure::zero(2), LevyMeasure::zero(2)};
    const BranchingMechanism m(s);
    SimConfig cfg;
    cfg.horizon = 1.0;
    EnsembleRequest req;
    req.times = {0.5, 1.0};
    req.test_functions = {vec2(1.0, 1.0)};
    const auto st = run_ensemble(m, perron(m.B()), vec2(1.0, 1.0), cfg, 2, req);
    for (const auto& o : st.observations)
    {
        CHECK(o.se_X.isZero(0.0));
        CHECK(o.W.se == 0.0);
        CHECK(o.laplace[0].se == 0.0);
        for (std::size_t k = 1; k < o.W_quantiles.size(); ++k)
            CHECK(o.W_quantiles[k] >= o.W_quantiles[k - 1]);
    }
}

TEST_CASE("ensemble mean matches the mean matrix", "[ensemble]")
{
    const auto m = literal_reference();
    SimConfig cfg;
    cfg.horizon = 2.0;
    EnsembleRequest req;
    req.times = {2.0};
    const TypedVector x0 = vec2(1.0, 1.0);
    const auto st = run_ensemble(m, perron(m.B()), x0, cfg, 10000, req);
    const TypedVector exact = mean_matrix(m.B(), 2.0).M.transpose() * x0;
    const auto& o = st.observations.back();
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(std::abs(o.mean_X(i) - exact(i)) <= 3.0 * o.se_X(i));
}

TEST_CASE("statistics do not depend on the worker count", "[ensemble]")
{
    const auto m = literal_reference();
    SimConfig cfg;
    cfg.horizon = 1.0;
    EnsembleRequest req;
    req.times = {0.5, 1.0};
    req.test_functions = {vec2(1.0, 1.0)};
    req.workers = 1;
    const auto a = run_ensemble(m, perron(m.B()), vec2(1.0, 1.0), cfg, 300, req);
    req.workers = 4;
    const auto b = run_ensemble(m, perron(m.B()), vec2(1.0, 1.0), cfg, 300, req);
    for (std::size_t k = 0; k < a.observations.size(); ++k)
    {
        CHECK(a.observations[k].mean_X == b.observations[k].mean_X);
        CHECK(a.observations[k].se_X == b.observations[k].se_X);
        CHECK(a.observations[k].W.mean == b.observations[k].W.mean);
        CHECK(a.observations[k].W_samples == b.observations[k].W_samples);
        CHECK(a.observations[k].laplace[0].mean == b.observations[k].laplace[0].mean);
    }
    CHECK(a.clamp_count == b.clamp_count);
}
