#pragma once

#include "mcsbp/types.hpp"

#include <string>
#include <vector>

namespace mcsbp
{
enum class Criticality
{
    subcritical,
    critical,
    supercritical
};

std::string to_string(Criticality c);

/// Perron-Frobenius data of B^T, normalised so <phi, 1> = 1 = <phi, phi_hat>.
struct SpectralData
{
    double lambda1 = 0.0;
    TypedVector phi;      // B^T phi = lambda1 phi
    TypedVector phi_hat;  // phi_hat^T B^T = lambda1 phi_hat^T
    Matrix P;             // P_ij = phi_i phi_hat_j
    Criticality cls = Criticality::critical;
    double m_phi = 0.0;
    double M_phi = 0.0;
};

struct MeanMatrix
{
    double t = 0.0;
    Matrix M;
};

/// M(t) = exp(t B^T), M(t)_ij = E_{e_i} <e_j, X_t>.
MeanMatrix mean_matrix(const Matrix& B, double t);

/// True when the support graph of the off-diagonal entries is strongly connected.
bool is_irreducible(const Matrix& B);

/// Dominant eigendata of B^T. Throws ModelError("... not irreducible") for reducible B.
SpectralData perron(const Matrix& B);

struct DecayFit
{
    std::vector<double> t_grid;
    std::vector<double> deviation;  // max-abs norm of M(t) e^{-lambda1 t} - P
    double c1 = 0.0;
    double c2 = 0.0;
    double residual = 0.0;  // worst absolute residual of the log-linear fit
    double c3 = 0.0;        // sup over the grid of ||M(t)|| e^{-lambda1 t}
    std::size_t fitted_points = 0;
};

/// Log-linear fit of ||M(t) e^{-lambda1 t} - P|| ~ c1 e^{-c2 t}. Points at rounding level are skipped.
DecayFit check_decay(const SpectralData& spectral, const Matrix& B, const std::vector<double>& t_grid);

double max_abs(const Matrix& m);
}  // namespace mcsbp
