#pragma once

#include "mcsbp/rng.hpp"
#include "mcsbp/types.hpp"

#include <memory>
#include <optional>
#include <variant>
#include <vector>

namespace mcsbp
{
struct Atom
{
    TypedVector z;
    double rate = 0.0;
};

/// Finite-activity jump law: a finite list of (jump vector, rate) pairs.
struct AtomicMeasure
{
    std::vector<Atom> atoms;
};

/// Parameters of a product-form radial jump law mu(dz) = pi Pi(dr), z = r pi.
///
/// Pi has density weight * r^-(1+alpha) * (ln r)^-gamma on (r0, inf) and, when
/// small_weight > 0, small_weight * r^-(1+beta) on (0, r0].
struct RadialTailParams
{
    TypedVector direction;
    double alpha = 1.5;
    double gamma = 0.0;
    double r0 = 1.0;
    double weight = 1.0;
    double beta = 1.0;
    double small_weight = 0.0;
};

class PowerLogTable;

/// Radial law with closed-form or tabulated tail functions and exact samplers.
class RadialTail
{
  public:
    explicit RadialTail(RadialTailParams params);

    const RadialTailParams& params() const noexcept { return p_; }
    const TypedVector& direction() const noexcept { return p_.direction; }
    bool has_small_jumps() const noexcept { return p_.small_weight > 0.0; }

    /// Density of Pi at r.
    double density(double r) const;

    /// Integral of Pi over (R, inf); R <= 0 gives the total mass (inf with small jumps).
    double mass_above(double R) const;
    /// Integral of r Pi(dr) over (R, inf).
    double first_above(double R) const;
    /// Integral of r Pi(dr) over (0, R].
    double first_below(double R) const;
    /// Integral of r^2 Pi(dr) over (0, R].
    double second_below(double R) const;
    /// Integral of r ln r Pi(dr) over [1, inf); +inf when divergent.
    double xlogx() const;

    /// Smallest R with mass_above(R) <= target (target > 0).
    double mass_quantile(double target) const;

    /// r ~ Pi restricted to (R, inf).
    double sample_above(double R, Philox& rng) const;
    /// r ~ r Pi(dr) restricted to (R, inf).
    double sample_size_biased_above(double R, Philox& rng) const;

    /// Integral of (e^{-a r} - 1 + a r) Pi(dr), a >= 0.
    double compensated_laplace(double a) const;
    /// Integral of r (e^{-a r} - 1) Pi(dr), a >= 0.
    double size_weighted_laplace(double a) const;

  private:
    double big_tail(int k, double R) const;
    double small_tail(int k, double R) const;
    double sample_big(int k, double s_cut, Philox& rng) const;
    double sample_small(int k, double lo, Philox& rng) const;

    RadialTailParams p_;
    std::shared_ptr<const PowerLogTable> table_;
};

enum class MomentKind
{
    first,
    truncated_second,
    xlogx
};

/// Jump law of a single type: atomic, or radial tail.
class LevyMeasure
{
  public:
    /// The zero measure on d types.
    static LevyMeasure zero(Eigen::Index d);
    static LevyMeasure atomic(std::vector<Atom> atoms);
    static LevyMeasure radial(RadialTailParams params);

    Eigen::Index dimension() const noexcept { return dim_; }
    bool is_atomic() const noexcept { return std::holds_alternative<AtomicMeasure>(law_); }
    bool is_zero() const noexcept;
    bool finite_activity() const noexcept;

    const AtomicMeasure* as_atomic() const noexcept { return std::get_if<AtomicMeasure>(&law_); }
    const RadialTail* as_radial() const noexcept { return std::get_if<RadialTail>(&law_); }

    /// Total rate; +inf for infinite activity.
    double total_rate() const;
    /// Integral of z mu(dz).
    TypedVector first_moment() const;
    /// Integral of (z_i - shift)^+ mu(dz).
    double positive_part(Eigen::Index i, double shift) const;
    /// Integral of (e^{-<u,z>} - 1 + <u,z>) mu(dz).
    double compensated_laplace(const TypedVector& u) const;
    /// Integral of z (e^{-<u,z>} - 1) mu(dz).
    TypedVector size_weighted_laplace(const TypedVector& u) const;
    /// Integral of ||z|| min ||z||^2 + sum_{j != i} z_j mu(dz), i the owning type.
    double integrability(Eigen::Index owner) const;

  private:
    LevyMeasure(Eigen::Index d, std::variant<AtomicMeasure, RadialTail> law);

    Eigen::Index dim_;
    std::variant<AtomicMeasure, RadialTail> law_;
};

/// Extended-real moment of a measure. For MomentKind::first, coord selects i.
double measure_moment(const LevyMeasure& measure, MomentKind kind, Eigen::Index coord = 0);

struct JumpSample
{
    TypedVector z;
    /// Drift compensation for the discarded jumps below eps, per unit time and unit mass.
    TypedVector compensation;
};

/// Draw one retained jump (size > eps) and report the small-jump compensation.
JumpSample sample_jump(const LevyMeasure& measure, Philox& rng, double eps);

/// Draw z from the size-biased law z_coord mu(dz) / int z_coord mu, restricted to
/// radial sizes above eps. Atomic measures ignore eps.
TypedVector sample_size_biased(const LevyMeasure& measure, Eigen::Index coord, Philox& rng, double eps);
}  // namespace mcsbp
