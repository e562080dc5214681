#include "mcsbp/mechanism.hpp"

#include <cmath>
#include <sstream>

namespace mcsbp
{
namespace
{
constexpr double kInequalitySlack = 1e-12;

std::string pair_name(Eigen::Index i, Eigen::Index j)
{
    return "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")";
}

TypedVector psi_with(const Matrix& B, const TypedVector& c, const std::vector<LevyMeasure>& measures,
                     const TypedVector& u)
{
    TypedVector out = -(B.transpose() * u);
    for (Eigen::Index i = 0; i < u.size(); ++i)
        out(i) += c(i) * u(i) * u(i) + measures[static_cast<std::size_t>(i)].compensated_laplace(u);
    return out;
}
}  // namespace

Matrix convert_drift(const Matrix& B_tilde, const std::vector<LevyMeasure>& measures)
{
    const auto d = B_tilde.rows();
    if (B_tilde.cols() != d || static_cast<Eigen::Index>(measures.size()) != d)
        throw ModelError("convert_drift: dimension mismatch");
    Matrix B = B_tilde;
    for (Eigen::Index i = 0; i < d; ++i)
    {
        for (Eigen::Index j = 0; j < d; ++j)
        {
            if (i != j && B_tilde(i, j) < 0.0)
                throw ModelError("convert_drift: negative off-diagonal B~" + pair_name(i, j));
            const double shift = i == j ? 1.0 : 0.0;
            const double m = measures[static_cast<std::size_t>(j)].positive_part(i, shift);
            if (!std::isfinite(m))
                throw ModelError("convert_drift: infinite moment integral for B" + pair_name(i, j));
            B(i, j) += m;
        }
    }
    return B;
}

bool ValidationReport::valid() const
{
    for (const auto& c : checks)
        if (!c.passed)
            return false;
    return true;
}

const ValidationCheck* ValidationReport::find(const std::string& name) const
{
    for (const auto& c : checks)
        if (c.name == name)
            return &c;
    return nullptr;
}

ValidationReport validate(const MechanismSpec& spec)
{
    ValidationReport report;
    const auto d = spec.c.size();

    {
        ValidationCheck check{"dimension", true, "d = " + std::to_string(d)};
        const auto square = [d](const std::optional<Matrix>& m) { return !m || (m->rows() == d && m->cols() == d); };
        if (d == 0 || !square(spec.B_tilde) || !square(spec.B) || static_cast<Eigen::Index>(spec.measures.size()) != d)
            check.passed = false;
        for (const auto& m : spec.measures)
            if (m.dimension() != d)
                check.passed = false;
        if (!check.passed)
            check.detail = "c, drift matrix and measures must all have dimension " + std::to_string(d);
        report.checks.push_back(check);
        if (!check.passed)
            return report;
    }
    {
        ValidationCheck check{"drift specification", spec.B_tilde.has_value() != spec.B.has_value(), ""};
        check.detail = check.passed ? (spec.B_tilde ? "B~ given" : "B given") : "exactly one of B_tilde or B is required";
        report.checks.push_back(check);
        if (!check.passed)
            return report;
    }
    {
        ValidationCheck check{"diffusion sign", true, ""};
        for (Eigen::Index i = 0; i < d; ++i)
            if (!(spec.c(i) >= 0.0) || !std::isfinite(spec.c(i)))
            {
                check.passed = false;
                check.detail += "c_" + std::to_string(i + 1) + " = " + std::to_string(spec.c(i)) + "; ";
            }
        report.checks.push_back(check);
    }
    if (spec.B_tilde)
    {
        ValidationCheck check{"off-diagonal sign", true, ""};
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                if (i != j && (*spec.B_tilde)(i, j) < 0.0)
                {
                    check.passed = false;
                    check.detail += "B~" + pair_name(i, j) + " = " + std::to_string((*spec.B_tilde)(i, j)) + "; ";
                }
        report.checks.push_back(check);
    }
    {
        ValidationCheck check{"integrability", true, ""};
        std::ostringstream os;
        for (Eigen::Index i = 0; i < d; ++i)
        {
            const double v = spec.measures[static_cast<std::size_t>(i)].integrability(i);
            os << "I_" << i + 1 << " = " << v << "; ";
            if (!std::isfinite(v))
                check.passed = false;
        }
        check.detail = os.str();
        report.checks.push_back(check);
    }

    std::optional<Matrix> B = spec.B;
    if (spec.B_tilde)
    {
        ValidationCheck check{"drift conversion", true, ""};
        Matrix tilde = *spec.B_tilde;
        // Sign problems are reported above; convert with the raw matrix anyway.
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                if (i != j)
                    tilde(i, j) = std::max(tilde(i, j), 0.0);
        try
        {
            Matrix converted = convert_drift(tilde, spec.measures);
            converted += *spec.B_tilde - tilde;
            B = converted;
        }
        catch (const ModelError& e)
        {
            check.passed = false;
            check.detail = e.what();
        }
        report.checks.push_back(check);
    }
    if (B)
    {
        ValidationCheck check{"moment inequality", true, ""};
        for (Eigen::Index j = 0; j < d; ++j)
        {
            const TypedVector m = spec.measures[static_cast<std::size_t>(j)].first_moment();
            for (Eigen::Index i = 0; i < d; ++i)
            {
                if (i == j)
                    continue;
                const double bij = (*B)(i, j);
                if (!(m(i) <= bij + kInequalitySlack * std::max(1.0, std::abs(bij))))
                {
                    check.passed = false;
                    std::ostringstream os;
                    os << "int z_" << i + 1 << " mu_" << j + 1 << " = " << m(i) << " > B" << pair_name(i, j) << " = "
                       << bij << "; ";
                    check.detail += os.str();
                }
            }
        }
        report.checks.push_back(check);

        ValidationCheck zero{"psi at zero", true, ""};
        const TypedVector p0 = psi_with(*B, spec.c, spec.measures, TypedVector::Zero(d));
        zero.passed = p0.cwiseAbs().maxCoeff() == 0.0;
        zero.detail = "max |psi(0)| = " + std::to_string(p0.cwiseAbs().maxCoeff());
        report.checks.push_back(zero);
        report.B = B;
    }
    return report;
}

BranchingMechanism::BranchingMechanism(const MechanismSpec& spec)
{
    const ValidationReport report = validate(spec);
    if (!report.valid())
    {
        std::string msg = "invalid branching mechanism:";
        for (const auto& c : report.checks)
            if (!c.passed)
                msg += " [" + c.name + "] " + c.detail;
        throw ModelError(msg);
    }
    c_ = spec.c;
    measures_ = spec.measures;
    B_ = *report.B;
    if (spec.B_tilde)
    {
        B_tilde_ = *spec.B_tilde;
    }
    else
    {
        B_tilde_ = B_;
        for (Eigen::Index i = 0; i < B_.rows(); ++i)
            for (Eigen::Index j = 0; j < B_.cols(); ++j)
                B_tilde_(i, j) -= measures_[static_cast<std::size_t>(j)].positive_part(i, i == j ? 1.0 : 0.0);
    }
}

bool BranchingMechanism::is_linear() const
{
    if ((c_.array() != 0.0).any())
        return false;
    for (const auto& m : measures_)
        if (!m.is_zero())
            return false;
    return true;
}

TypedVector evaluate_psi(const BranchingMechanism& mech, const TypedVector& u)
{
    if (u.size() != mech.dimension())
        throw ModelError("evaluate_psi: dimension mismatch");
    if (!is_nonnegative(u))
        throw ModelError("evaluate_psi: u must be nonnegative");
    return psi_with(mech.B(), mech.c(), mech.measures(), u);
}

XlogxVerdict check_xlogx(const BranchingMechanism& mech)
{
    XlogxVerdict verdict;
    for (const auto& m : mech.measures())
    {
        const double v = measure_moment(m, MomentKind::xlogx);
        verdict.integrals.push_back(v);
        if (!std::isfinite(v))
            verdict.holds = false;
    }
    return verdict;
}
}  // namespace mcsbp
