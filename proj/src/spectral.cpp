#include "mcsbp/spectral.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>

namespace mcsbp
{
namespace
{
constexpr double kPowerTol = 1e-12;
constexpr int kPowerMaxIter = 100000;
constexpr double kStepH = 1.0;

// Dominant positive eigenvector of A by x <- A x, normalised to unit sum.
TypedVector power_iterate(const Matrix& A)
{
    const auto d = A.rows();
    TypedVector x = TypedVector::Constant(d, 1.0 / static_cast<double>(d));
    double change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kPowerMaxIter; ++it)
    {
        TypedVector y = A * x;
        y = y.cwiseMax(0.0);
        const double s = y.sum();
        if (!(s > 0.0) || !std::isfinite(s))
            throw NumericalError("perron: power iteration lost positivity", s);
        y /= s;
        change = (y - x).cwiseAbs().maxCoeff();
        x = y;
        if (change <= kPowerTol)
            return x;
    }
    throw NumericalError("perron: power iteration did not converge (complex or tied dominant pair?)", change);
}

// Newton on the bordered system (A - lambda I) x = 0, <w, x> = 1.
void polish(const Matrix& A, const TypedVector& w, TypedVector& x, double& lambda)
{
    const auto d = A.rows();
    for (int it = 0; it < 4; ++it)
    {
        Matrix J = Matrix::Zero(d + 1, d + 1);
        J.topLeftCorner(d, d) = A - lambda * Matrix::Identity(d, d);
        J.topRightCorner(d, 1) = -x;
        J.bottomLeftCorner(1, d) = w.transpose();
        Eigen::VectorXd r(d + 1);
        r.head(d) = A * x - lambda * x;
        r(d) = w.dot(x) - 1.0;
        if (r.cwiseAbs().maxCoeff() < 1e-15 * std::max(1.0, std::abs(lambda)))
            break;
        const Eigen::VectorXd delta = J.fullPivLu().solve(-r);
        x += delta.head(d);
        lambda += delta(d);
    }
}
}  // namespace

std::string to_string(Criticality c)
{
    switch (c)
    {
    case Criticality::subcritical:
        return "subcritical";
    case Criticality::critical:
        return "critical";
    case Criticality::supercritical:
        return "supercritical";
    }
    return "unknown";
}

double max_abs(const Matrix& m)
{
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

MeanMatrix mean_matrix(const Matrix& B, double t)
{
    if (!(t >= 0.0))
        throw ModelError("mean_matrix: t must be nonnegative");
    if (t == 0.0)
        return {t, Matrix::Identity(B.rows(), B.cols())};
    const Matrix A = t * B.transpose();
    return {t, A.exp()};
}

bool is_irreducible(const Matrix& B)
{
    const auto d = B.rows();
    // Transitive closure of i -> j whenever B_ij > 0, i != j.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reach(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            reach(i, j) = i == j || B(i, j) > 0.0;
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index i = 0; i < d; ++i)
            if (reach(i, k))
                for (Eigen::Index j = 0; j < d; ++j)
                    reach(i, j) = reach(i, j) || reach(k, j);
    return reach.all();
}

SpectralData perron(const Matrix& B)
{
    const auto d = B.rows();
    if (d == 0 || B.cols() != d)
        throw ModelError("perron: B must be square and non-empty");
    if (!B.allFinite())
        throw ModelError("perron: B has non-finite entries");
    if (!is_irreducible(B))
        throw ModelError("perron: B is not irreducible");

    const Matrix Bt = B.transpose();
    SpectralData out;
    if (d == 1)
    {
        out.lambda1 = B(0, 0);
        out.phi = TypedVector::Ones(1);
        out.phi_hat = TypedVector::Ones(1);
    }
    else
    {
        // Shift by the largest diagonal entry so exp stays bounded; eigenvectors are unchanged.
        const double shift = B.diagonal().maxCoeff();
        const Matrix A = (kStepH * (Bt - shift * Matrix::Identity(d, d))).exp();
        TypedVector phi = power_iterate(A);
        TypedVector phi_hat = power_iterate(A.transpose());

        double lambda = phi.dot(Bt * phi) / phi.squaredNorm();
        polish(Bt, TypedVector::Ones(d), phi, lambda);
        double lambda_hat = lambda;
        phi_hat /= phi.dot(phi_hat);
        polish(B, phi, phi_hat, lambda_hat);

        if ((phi.array() <= 0.0).any() || (phi_hat.array() <= 0.0).any())
            throw NumericalError("perron: eigenvector lost positivity", std::min(phi.minCoeff(), phi_hat.minCoeff()));
        out.lambda1 = lambda;
        out.phi = phi;
        out.phi_hat = phi_hat;
    }
    out.P = out.phi * out.phi_hat.transpose();
    out.m_phi = out.phi.minCoeff();
    out.M_phi = out.phi.maxCoeff();
    const double scale = std::max(1.0, max_abs(B));
    if (std::abs(out.lambda1) <= 1e-12 * scale)
        out.cls = Criticality::critical;
    else
        out.cls = out.lambda1 > 0.0 ? Criticality::supercritical : Criticality::subcritical;
    return out;
}

DecayFit check_decay(const SpectralData& spectral, const Matrix& B, const std::vector<double>& t_grid)
{
    DecayFit fit;
    fit.t_grid = t_grid;
    const double floor = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, max_abs(spectral.P));
    std::vector<double> xs, ys;
    for (double t : t_grid)
    {
        const Matrix scaled = mean_matrix(B, t).M * std::exp(-spectral.lambda1 * t);
        const double dev = max_abs(scaled - spectral.P);
        fit.deviation.push_back(dev);
        fit.c3 = std::max(fit.c3, max_abs(scaled));
        if (dev > floor)
        {
            xs.push_back(t);
            ys.push_back(std::log(dev));
        }
    }
    fit.fitted_points = xs.size();
    if (xs.size() < 2)
        return fit;  // nothing above rounding level: c2 left at 0, deviation is the story

    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k)
    {
        sx += xs[k];
        sy += ys[k];
        sxx += xs[k] * xs[k];
        sxy += xs[k] * ys[k];
    }
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0)
        return fit;
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;
    fit.c2 = -slope;
    fit.c1 = std::exp(intercept);
    for (std::size_t k = 0; k < xs.size(); ++k)
        fit.residual = std::max(fit.residual, std::abs(ys[k] - (intercept + slope * xs[k])));
    return fit;
}
}  // namespace mcsbp
