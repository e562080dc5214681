#include "mcsbp/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace mcsbp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{
Matrix swap2()
{
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

Matrix random_metzler(std::uint64_t seed, int d)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> off(0.05, 1.0), diag(-2.0, 0.5);
    Matrix B(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            B(i, j) = i == j ? diag(g) : off(g);
    return B;
}
}  // namespace

TEST_CASE("mean_matrix examples", "[spectral]")
{
    const Matrix B = swap2();
    CHECK(mean_matrix(B, 0.0).M.isApprox(Matrix::Identity(2, 2)));
    for (double t : {0.3, 1.0, 4.0})
    {
        const Matrix M = mean_matrix(B, t).M;
        CHECK_THAT(M(0, 0), WithinRel(std::cosh(t), 1e-13));
        CHECK_THAT(M(0, 1), WithinRel(std::sinh(t), 1e-13));
    }
    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = -0.3;
    D(1, 1) = 0.8;
    const Matrix M = mean_matrix(D, 2.0).M;
    CHECK_THAT(M(0, 0), WithinRel(std::exp(-0.6), 1e-14));
    CHECK_THAT(M(1, 1), WithinRel(std::exp(1.6), 1e-14));
    CHECK(M(0, 1) == 0.0);
}

TEST_CASE("mean_matrix semigroup", "[spectral]")
{
    const Matrix B = random_metzler(5, 3);
    for (double s : {0.0, 0.5, 3.0, 10.0})
        for (double t : {0.2, 2.0, 10.0})
        {
            const Matrix lhs = mean_matrix(B, s).M * mean_matrix(B, t).M;
            const Matrix rhs = mean_matrix(B, s + t).M;
            CHECK(max_abs(lhs - rhs) <= 1e-9 * max_abs(rhs));
        }
}

TEST_CASE("perron examples", "[spectral]")
{
    const auto s = perron(swap2());
    CHECK_THAT(s.lambda1, WithinAbs(1.0, 1e-12));
    CHECK_THAT(s.phi(0), WithinAbs(0.5, 1e-12));
    CHECK_THAT(s.phi(1), WithinAbs(0.5, 1e-12));
    CHECK_THAT(s.phi_hat(0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(s.phi_hat(1), WithinAbs(1.0, 1e-12));
    CHECK(s.cls == Criticality::supercritical);

    Matrix b(1, 1);
    b << -0.7;
    const auto one = perron(b);
    CHECK(one.lambda1 == -0.7);
    CHECK(one.phi(0) == 1.0);
    CHECK(one.phi_hat(0) == 1.0);
    CHECK(one.cls == Criticality::subcritical);

    Matrix diag = Matrix::Zero(2, 2);
    diag(0, 0) = 1.0;
    CHECK_THROWS_AS(perron(diag), ModelError);
    CHECK_FALSE(is_irreducible(diag));
    CHECK(is_irreducible(swap2()));

    Matrix crit(2, 2);
    crit << -1, 1, 1, -1;
    CHECK(perron(crit).cls == Criticality::critical);
}

TEST_CASE("perron agrees with a general eigensolver on random Metzler matrices", "[spectral]")
{
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
    {
        const int d = 2 + static_cast<int>(seed % 4);
        const Matrix B = random_metzler(seed, d);
        const auto s = perron(B);
        Eigen::EigenSolver<Matrix> es(B.transpose());
        double best = -INFINITY;
        for (Eigen::Index k = 0; k < d; ++k)
            best = std::max(best, es.eigenvalues()(k).real());
        CHECK_THAT(s.lambda1, WithinAbs(best, 1e-10));

        const Matrix Bt = B.transpose();
        CHECK((Bt * s.phi - s.lambda1 * s.phi).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((Bt.transpose() * s.phi_hat - s.lambda1 * s.phi_hat).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK_THAT(s.phi.sum(), WithinAbs(1.0, 1e-12));
        CHECK_THAT(s.phi.dot(s.phi_hat), WithinAbs(1.0, 1e-12));
        CHECK((s.phi.array() > 0.0).all());
        CHECK((s.phi_hat.array() > 0.0).all());
        CHECK(max_abs(s.P - s.phi * s.phi_hat.transpose()) == 0.0);
        CHECK(max_abs(s.P * s.P - s.P) <= 1e-10);
        for (double t : {0.5, 2.0})
            CHECK((mean_matrix(B, t).M * s.phi - std::exp(s.lambda1 * t) * s.phi).cwiseAbs().maxCoeff() <=
                  1e-9 * std::exp(s.lambda1 * t));

        const double kappa = 0.37;
        const auto shifted = perron(B + kappa * Matrix::Identity(d, d));
        CHECK_THAT(shifted.lambda1 - s.lambda1, WithinAbs(kappa, 1e-10));
        CHECK((shifted.phi - s.phi).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((shifted.phi_hat - s.phi_hat).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("check_decay", "[spectral]")
{
    std::vector<double> grid;
    for (double t = 0.25; t <= 8.0; t += 0.25)
        grid.push_back(t);
    const Matrix B = swap2();
    const auto s = perron(B);
    const auto fit = check_decay(s, B, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK_THAT(fit.deviation[k], WithinAbs(0.5 * std::exp(-2.0 * grid[k]), 1e-13));
    CHECK_THAT(fit.c2, WithinRel(2.0, 1e-6));
    CHECK_THAT(fit.c1, WithinRel(0.5, 1e-5));

    Matrix b(1, 1);
    b << 0.4;
    const auto one = check_decay(perron(b), b, grid);
    for (double dev : one.deviation)
        CHECK(dev <= 1e-14);

    const Matrix R = random_metzler(11, 3);
    const auto fr = check_decay(perron(R), R, grid);
    // past the mixing knee the deviation falls monotonically
    for (std::size_t k = grid.size() / 4; k + 1 < grid.size(); ++k)
        if (fr.deviation[k] > 1e-12)
            CHECK(fr.deviation[k + 1] < fr.deviation[k]);
    // the sup covers the late grid, where the normalised mean is within the deviation of P
    CHECK(fr.c3 >= max_abs(perron(R).P) - fr.deviation.back() - 1e-12);
}
