#pragma once

#include "mcsbp/levy.hpp"
#include "mcsbp/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mcsbp
{
/// Unvalidated mechanism description, as read from a config file.
/// Exactly one of B_tilde or B is expected; validate() reports anything else.
struct MechanismSpec
{
    TypedVector c;
    std::optional<Matrix> B_tilde;
    std::optional<Matrix> B;
    std::vector<LevyMeasure> measures;
};

/// A validated branching mechanism
///   psi_i(u) = -<u, B e_i> + c_i u_i^2 + int (e^{-<u,z>} - 1 + <u,z>) mu_i(dz).
/// Immutable after construction.
class BranchingMechanism
{
  public:
    /// Throws ModelError on any violated invariant.
    explicit BranchingMechanism(const MechanismSpec& spec);

    Eigen::Index dimension() const noexcept { return c_.size(); }
    const TypedVector& c() const noexcept { return c_; }
    const Matrix& B() const noexcept { return B_; }
    const Matrix& B_tilde() const noexcept { return B_tilde_; }
    const LevyMeasure& measure(Eigen::Index i) const { return measures_.at(static_cast<std::size_t>(i)); }
    const std::vector<LevyMeasure>& measures() const noexcept { return measures_; }

    /// True when c = 0 and every measure is zero: X_t = e^{tB} x0.
    bool is_linear() const;

  private:
    TypedVector c_;
    Matrix B_tilde_;
    Matrix B_;
    std::vector<LevyMeasure> measures_;
};

/// B_ij = B~_ij + int (z_i - delta_ij)^+ mu_j(dz).
Matrix convert_drift(const Matrix& B_tilde, const std::vector<LevyMeasure>& measures);

TypedVector evaluate_psi(const BranchingMechanism& mech, const TypedVector& u);

struct XlogxVerdict
{
    bool holds = true;
    std::vector<double> integrals;
};

XlogxVerdict check_xlogx(const BranchingMechanism& mech);

struct ValidationCheck
{
    std::string name;
    bool passed = true;
    std::string detail;
};

struct ValidationReport
{
    std::vector<ValidationCheck> checks;
    std::optional<Matrix> B;

    bool valid() const;
    const ValidationCheck* find(const std::string& name) const;
};

/// Check every mechanism invariant without throwing.
ValidationReport validate(const MechanismSpec& spec);
}  // namespace mcsbp
