#pragma once

#include "mcsbp/mechanism.hpp"
#include "mcsbp/spectral.hpp"

#include <vector>

namespace mcsbp
{
inline constexpr double kDefaultFlowDt = 1e-3;

/// v(t, f) on a uniform grid, dv/dt = -psi(v), v(0) = f.
struct FlowSolution
{
    std::vector<double> t_grid;
    std::vector<TypedVector> v_values;
    TypedVector f;
    double step_size = 0.0;
    std::size_t clipped = 0;   // tiny negative components set to zero
    std::size_t halvings = 0;  // steps retried at half size

    const TypedVector& terminal() const { return v_values.back(); }
};

struct ThetaSolution
{
    std::vector<double> t_grid;
    std::vector<TypedVector> theta_values;
    FlowSolution flow;

    const TypedVector& terminal() const { return theta_values.back(); }
};

/// Classical RK4 with n = round(t / dt) equal steps.
FlowSolution solve_v(const BranchingMechanism& mech, const TypedVector& f, double t, double dt = kDefaultFlowDt);

/// E_x exp(-<f, X_t>) = exp(-<x, v(t, f)>).
double laplace_functional(const BranchingMechanism& mech, const TypedVector& x, const TypedVector& f, double t,
                          double dt = kDefaultFlowDt);

/// max_i |v_i(t + s, f) - v_i(t, v(s, f))|, each solve on its own grid.
double semigroup_check(const BranchingMechanism& mech, const TypedVector& f, double s, double t, double dt);

struct MeanConsistency
{
    Matrix derivative;  // d v_k(t, eps e_j) / d eps at 0, entry (k, j)
    Matrix M;           // mean_matrix(B, t)
    double defect = 0.0;
};

/// Derivative of v at f = 0 against M(t). Second-order one-sided differences keep f >= 0.
MeanConsistency mean_consistency(const BranchingMechanism& mech, double t, double dt, double eps = 1e-5);

/// (v, theta) integrated jointly on the same grid, theta(0) = 1.
/// excursion_delta > 0 replaces 2 c v by (2c / delta)(1 - e^{-delta v}): the continuous-immigration
/// term when excursions are approximated by mass-delta immigrants at rate 2c / delta.
ThetaSolution solve_theta(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& f,
                          double t, double dt = kDefaultFlowDt, double excursion_delta = 0.0);

/// E~_x exp(-<f, X_t>) = E_x exp(-<f, X_t>) <theta_t, phi o x> / <phi, x>.
double tilted_laplace(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x,
                      const TypedVector& f, double t, double dt = kDefaultFlowDt, double excursion_delta = 0.0);
}  // namespace mcsbp
