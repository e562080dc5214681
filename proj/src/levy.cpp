#include "mcsbp/levy.hpp"

#include "mcsbp/special.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace mcsbp
{
namespace
{
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::array<double, 4> kGlNodes{0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                         0.9602898564975363};
constexpr std::array<double, 4> kGlWeights{0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                           0.1012285362903763};

double exponential(Philox& rng)
{
    return -std::log(rng.uniform_open());
}
}  // namespace

// Tabulated integrals of w e^{(k - alpha) s} s^{-gamma} on a uniform grid in s = ln r.
// tail_[k][n] integrates from s_n to infinity (k = 0, 1); head_[n] integrates k = 2 from s0 to s_n.
// Values between nodes add one 8-point Gauss-Legendre cell, so lookups stay exact to
// rounding at O(1) cost. Only used when gamma != 0; pure power laws are closed form.
class PowerLogTable
{
  public:
    static constexpr double kStep = 1.0 / 16.0;

    PowerLogTable(double weight, double alpha, double gamma, double s0)
        : w_(weight), alpha_(alpha), gamma_(gamma), s0_(s0)
    {
        s_max_ = std::max(s0 + 4.0, 690.0);
        n_ = static_cast<std::size_t>(std::ceil((s_max_ - s0_) / kStep));
        s_max_ = s0_ + static_cast<double>(n_) * kStep;
        for (int k = 0; k < 2; ++k)
        {
            auto& t = tail_[k];
            t.assign(n_ + 1, 0.0);
            t[n_] = w_ * special::power_log_tail(alpha_ - k, gamma_, s_max_);
            for (std::size_t n = n_; n-- > 0;)
                t[n] = t[n + 1] + cell(k, node(n), node(n + 1));
        }
        head_.assign(n_ + 1, 0.0);
        for (std::size_t n = 0; n < n_; ++n)
            head_[n + 1] = head_[n] + cell(2, node(n), node(n + 1));
    }

    double density(int k, double s) const { return w_ * std::exp((k - alpha_) * s) * std::pow(s, -gamma_); }

    double tail(int k, double s) const
    {
        if (s <= s0_)
            return tail_[k][0];
        if (s >= s_max_)
            return w_ * special::power_log_tail(alpha_ - k, gamma_, s);
        const auto n = index(s);
        return tail_[k][n + 1] + cell(k, s, node(n + 1));
    }

    double head(double s) const
    {
        if (s <= s0_)
            return 0.0;
        if (s >= s_max_)
            return head_[n_] + w_ * special::power_log_segment(2.0 - alpha_, gamma_, s_max_, s);
        const auto n = index(s);
        return head_[n] + cell(2, node(n), s);
    }

    /// s with tail(k, s) == target, for 0 < target <= tail(k, s0).
    double invert_tail(int k, double target) const
    {
        const auto& t = tail_[k];
        if (target >= t[0])
            return s0_;
        if (target < t[n_])
            return invert_beyond(k, target);
        // t is non-increasing; find n with t[n] >= target > t[n + 1].
        const auto it = std::upper_bound(t.begin(), t.end(), target, std::greater<>());
        const auto n = static_cast<std::size_t>(std::distance(t.begin(), it)) - 1;
        double lo = node(n);
        double hi = node(n + 1);
        double s = lo;
        if (t[n] > 0.0 && t[n + 1] > 0.0)
            s = lo + kStep * std::log(t[n] / target) / std::log(t[n] / t[n + 1]);
        for (int iter = 0; iter < 60; ++iter)
        {
            const double f = t[n + 1] + cell(k, s, node(n + 1)) - target;
            if (f > 0.0)
                lo = s;
            else if (f < 0.0)
                hi = s;
            else
                return s;
            const double step = f / density(k, s);
            double next = s + step;
            if (!(next > lo && next < hi))
                next = 0.5 * (lo + hi);
            if (std::abs(next - s) < 1e-14 * std::max(1.0, std::abs(s)))
                return next;
            s = next;
        }
        return s;
    }

  private:
    double node(std::size_t n) const { return s0_ + static_cast<double>(n) * kStep; }

    std::size_t index(double s) const
    {
        return std::min(n_ - 1, static_cast<std::size_t>((s - s0_) / kStep));
    }

    double cell(int k, double a, double b) const
    {
        const double mid = 0.5 * (a + b);
        const double half = 0.5 * (b - a);
        double sum = 0.0;
        for (std::size_t i = 0; i < kGlNodes.size(); ++i)
            sum += kGlWeights[i] * (density(k, mid - half * kGlNodes[i]) + density(k, mid + half * kGlNodes[i]));
        return half * sum;
    }

    double invert_beyond(int k, double target) const
    {
        double s = s_max_;
        for (int iter = 0; iter < 200; ++iter)
        {
            const double f = tail(k, s) - target;
            const double next = s + f / density(k, s);
            if (!std::isfinite(next))
                break;
            if (std::abs(next - s) < 1e-13 * std::abs(s))
                return next;
            s = std::max(next, s_max_);
        }
        return s;
    }

    double w_, alpha_, gamma_, s0_;
    double s_max_ = 0.0;
    std::size_t n_ = 0;
    std::array<std::vector<double>, 2> tail_;
    std::vector<double> head_;
};

// ---------------------------------------------------------------------------
// RadialTail
// ---------------------------------------------------------------------------

RadialTail::RadialTail(RadialTailParams params) : p_(std::move(params))
{
    if (p_.direction.size() == 0)
        throw ModelError("radial tail: empty direction");
    if (!is_nonnegative(p_.direction) || std::abs(p_.direction.sum() - 1.0) > 1e-12)
        throw ModelError("radial tail: direction must be a probability vector");
    if (!(p_.r0 > 0.0) || !(p_.weight > 0.0))
        throw ModelError("radial tail: r0 and weight must be positive");
    if (p_.gamma < 0.0)
        throw ModelError("radial tail: log exponent gamma must be >= 0");
    if (p_.gamma != 0.0 && !(p_.r0 > 1.0))
        throw ModelError("radial tail: a log factor requires r0 > 1");
    if (!(p_.alpha > 1.0 || (p_.alpha == 1.0 && p_.gamma > 1.0)))
        throw ModelError("radial tail: first moment on (1, inf) must be finite (alpha > 1, or alpha = 1 and gamma > 1)");
    if (p_.small_weight < 0.0)
        throw ModelError("radial tail: small-jump weight must be >= 0");
    if (p_.small_weight > 0.0 && !(p_.beta > 0.0 && p_.beta < 2.0))
        throw ModelError("radial tail: small-jump index beta must lie in (0, 2)");
    if (p_.gamma != 0.0)
        table_ = std::make_shared<PowerLogTable>(p_.weight, p_.alpha, p_.gamma, std::log(p_.r0));
}

double RadialTail::density(double r) const
{
    if (r <= 0.0)
        return 0.0;
    if (r <= p_.r0)
        return p_.small_weight * std::pow(r, -1.0 - p_.beta);
    double d = p_.weight * std::pow(r, -1.0 - p_.alpha);
    if (p_.gamma != 0.0)
        d *= std::pow(std::log(r), -p_.gamma);
    return d;
}

// Integral of r^k Pi_big(dr) over (max(R, r0), inf), k in {0, 1}.
double RadialTail::big_tail(int k, double R) const
{
    const double cut = std::max(R, p_.r0);
    if (table_)
        return table_->tail(k, std::log(cut));
    const double a = p_.alpha - k;
    return p_.weight * std::pow(cut, -a) / a;
}

// Integral of r^k Pi_small(dr) over (R, r0], k in {0, 1}.
double RadialTail::small_tail(int k, double R) const
{
    if (!has_small_jumps() || R >= p_.r0)
        return 0.0;
    const double q = k - p_.beta;
    if (R <= 0.0)
        return q > 0.0 ? p_.small_weight * std::pow(p_.r0, q) / q : kInf;
    if (q == 0.0)
        return p_.small_weight * std::log(p_.r0 / R);
    return p_.small_weight * (std::pow(p_.r0, q) - std::pow(R, q)) / q;
}

double RadialTail::mass_above(double R) const
{
    return small_tail(0, R) + big_tail(0, R);
}

double RadialTail::first_above(double R) const
{
    return small_tail(1, R) + big_tail(1, R);
}

double RadialTail::first_below(double R) const
{
    if (R <= 0.0)
        return 0.0;
    const double small_total = small_tail(1, 0.0);
    if (R <= p_.r0)
        return small_total - small_tail(1, R);
    return small_total + big_tail(1, p_.r0) - big_tail(1, R);
}

double RadialTail::second_below(double R) const
{
    if (R <= 0.0)
        return 0.0;
    const double q = 2.0 - p_.beta;
    const double small = has_small_jumps() ? p_.small_weight * std::pow(std::min(R, p_.r0), q) / q : 0.0;
    if (R <= p_.r0)
        return small;
    if (table_)
        return small + table_->head(std::log(R));
    const double b = 2.0 - p_.alpha;
    if (b == 0.0)
        return small + p_.weight * std::log(R / p_.r0);
    return small + p_.weight * (std::pow(R, b) - std::pow(p_.r0, b)) / b;
}

double RadialTail::xlogx() const
{
    if (!(p_.alpha > 1.0 || p_.gamma > 2.0))
        return kInf;
    double big = 0.0;
    const double s_start = std::max(std::log(p_.r0), 0.0);
    if (p_.gamma == 0.0)
    {
        const double a = p_.alpha - 1.0;
        big = p_.weight * std::exp(-a * s_start) * (s_start / a + 1.0 / (a * a));
    }
    else
    {
        big = p_.weight * special::power_log_tail(p_.alpha - 1.0, p_.gamma - 1.0, s_start);
    }
    double small = 0.0;
    if (has_small_jumps() && p_.r0 > 1.0)
    {
        const double q = 1.0 - p_.beta;
        const double l = std::log(p_.r0);
        if (q == 0.0)
            small = 0.5 * l * l;
        else
            small = std::pow(p_.r0, q) * (l / q - 1.0 / (q * q)) + 1.0 / (q * q);
        small *= p_.small_weight;
    }
    return big + small;
}

double RadialTail::mass_quantile(double target) const
{
    if (!(target > 0.0))
        throw ModelError("mass_quantile requires a positive target");
    const double big_total = big_tail(0, p_.r0);
    if (target < big_total)
    {
        if (table_)
            return std::exp(table_->invert_tail(0, target));
        return std::pow(p_.weight / (p_.alpha * target), 1.0 / p_.alpha);
    }
    if (!has_small_jumps())
        return 0.0;
    const double rest = target - big_total;
    return std::pow(std::pow(p_.r0, -p_.beta) + p_.beta * rest / p_.small_weight, -1.0 / p_.beta);
}

double RadialTail::sample_big(int k, double s_cut, Philox& rng) const
{
    if (!table_)
        return std::exp(s_cut + exponential(rng) / (p_.alpha - k));
    const double target = rng.uniform_open() * table_->tail(k, s_cut);
    return std::exp(table_->invert_tail(k, target));
}

// Inverse CDF of the density r^{k-1-beta} on (lo, r0].
double RadialTail::sample_small(int k, double lo, Philox& rng) const
{
    const double u = rng.uniform_open();
    const double q = k - p_.beta;
    if (q == 0.0)
        return lo * std::pow(p_.r0 / lo, u);
    const double lq = std::pow(lo, q);
    return std::pow(lq + u * (std::pow(p_.r0, q) - lq), 1.0 / q);
}

double RadialTail::sample_above(double R, Philox& rng) const
{
    if (R >= p_.r0)
        return sample_big(0, std::log(R), rng);
    const double small = small_tail(0, R);
    const double big = big_tail(0, p_.r0);
    if (small > 0.0 && rng.uniform_open() * (small + big) < small)
        return sample_small(0, R, rng);
    return sample_big(0, std::log(p_.r0), rng);
}

double RadialTail::sample_size_biased_above(double R, Philox& rng) const
{
    if (R >= p_.r0)
        return sample_big(1, std::log(R), rng);
    const double small = small_tail(1, std::max(R, 0.0));
    const double big = big_tail(1, p_.r0);
    if (small > 0.0 && rng.uniform_open() * (small + big) < small)
        return sample_small(1, std::max(R, 0.0), rng);
    return sample_big(1, std::log(p_.r0), rng);
}

namespace
{
// Breakpoints in s = ln r for the Laplace-type integrals: r0, r = 1 and r = 1/a.
std::vector<double> split_points(double s_lo, double s_hi, double s0, double a)
{
    std::vector<double> pts{s_lo};
    for (double s : {s0, 0.0, a > 0.0 ? -std::log(a) : kInf})
        if (s > s_lo && s < s_hi)
            pts.push_back(s);
    pts.push_back(s_hi);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

// (1 - e^{-x}) / x and (e^{-x} - 1 + x) / x^2, finite at x = 0. Small-jump integrands are
// written as e^{(2 - beta) s} times these so nothing overflows as s -> -inf.
double ratio_first(double x)
{
    return x < 1e-8 ? 1.0 - 0.5 * x : special::one_minus_exp(x) / x;
}

double ratio_second(double x)
{
    return x < 1e-4 ? 0.5 - x / 6.0 + x * x / 24.0 : special::compensated_exp(x) / (x * x);
}

double integrate_pieces(const std::function<double(double)>& f, const std::vector<double>& pts)
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        sum += special::integrate(f, pts[i], pts[i + 1]);
    return sum;
}
}  // namespace

double RadialTail::compensated_laplace(double a) const
{
    if (a <= 0.0)
        return 0.0;
    const double s0 = std::log(p_.r0);
    double total = 0.0;
    if (has_small_jumps())
    {
        const auto f = [&](double s) {
            return p_.small_weight * a * a * std::exp((2.0 - p_.beta) * s) * ratio_second(a * std::exp(s));
        };
        total += integrate_pieces(f, split_points(-kInf, s0, kInf, a));
    }
    // Big part as int (e^{-ar} - 1) Pi + a * first moment, which decays like Pi itself.
    const auto g = [&](double s) {
        double d = p_.weight * std::exp(-p_.alpha * s);
        if (p_.gamma != 0.0)
            d *= std::pow(s, -p_.gamma);
        return -d * special::one_minus_exp(a * std::exp(s));
    };
    total += integrate_pieces(g, split_points(s0, kInf, s0, a)) + a * big_tail(1, p_.r0);
    return total;
}

double RadialTail::size_weighted_laplace(double a) const
{
    if (a <= 0.0)
        return 0.0;
    const double s0 = std::log(p_.r0);
    double total = 0.0;
    if (has_small_jumps())
    {
        const auto f = [&](double s) {
            return -p_.small_weight * a * std::exp((2.0 - p_.beta) * s) * ratio_first(a * std::exp(s));
        };
        total += integrate_pieces(f, split_points(-kInf, s0, kInf, a));
    }
    const auto g = [&](double s) {
        double d = p_.weight * std::exp((1.0 - p_.alpha) * s);
        if (p_.gamma != 0.0)
            d *= std::pow(s, -p_.gamma);
        return d * std::exp(-a * std::exp(s));
    };
    total += integrate_pieces(g, split_points(s0, kInf, s0, a)) - big_tail(1, p_.r0);
    return total;
}

// ---------------------------------------------------------------------------
// LevyMeasure
// ---------------------------------------------------------------------------

LevyMeasure::LevyMeasure(Eigen::Index d, std::variant<AtomicMeasure, RadialTail> law) : dim_(d), law_(std::move(law)) {}

LevyMeasure LevyMeasure::zero(Eigen::Index d)
{
    if (d <= 0)
        throw ModelError("measure dimension must be positive");
    return LevyMeasure(d, AtomicMeasure{});
}

LevyMeasure LevyMeasure::atomic(std::vector<Atom> atoms)
{
    if (atoms.empty())
        throw ModelError("atomic measure needs at least one atom; use LevyMeasure::zero");
    const auto d = atoms.front().z.size();
    for (const auto& a : atoms)
    {
        if (a.z.size() != d)
            throw ModelError("atomic measure: atoms of different dimension");
        if (!is_nonnegative(a.z) || a.z.sum() <= 0.0)
            throw ModelError("atomic measure: atoms must be nonzero and nonnegative");
        if (!(a.rate > 0.0) || !std::isfinite(a.rate))
            throw ModelError("atomic measure: rates must be positive and finite");
    }
    return LevyMeasure(d, AtomicMeasure{std::move(atoms)});
}

LevyMeasure LevyMeasure::radial(RadialTailParams params)
{
    const auto d = params.direction.size();
    return LevyMeasure(d, RadialTail(std::move(params)));
}

bool LevyMeasure::is_zero() const noexcept
{
    const auto* a = as_atomic();
    return a != nullptr && a->atoms.empty();
}

bool LevyMeasure::finite_activity() const noexcept
{
    const auto* r = as_radial();
    return r == nullptr || !r->has_small_jumps();
}

double LevyMeasure::total_rate() const
{
    if (const auto* a = as_atomic())
    {
        double s = 0.0;
        for (const auto& atom : a->atoms)
            s += atom.rate;
        return s;
    }
    return as_radial()->mass_above(0.0);
}

TypedVector LevyMeasure::first_moment() const
{
    if (const auto* a = as_atomic())
    {
        TypedVector m = TypedVector::Zero(dim_);
        for (const auto& atom : a->atoms)
            m += atom.rate * atom.z;
        return m;
    }
    const auto* r = as_radial();
    const double m1 = r->first_above(0.0);
    TypedVector m(dim_);
    for (Eigen::Index i = 0; i < dim_; ++i)
        m(i) = r->direction()(i) > 0.0 ? r->direction()(i) * m1 : 0.0;
    return m;
}

double LevyMeasure::positive_part(Eigen::Index i, double shift) const
{
    if (const auto* a = as_atomic())
    {
        double s = 0.0;
        for (const auto& atom : a->atoms)
            s += atom.rate * std::max(atom.z(i) - shift, 0.0);
        return s;
    }
    const auto* r = as_radial();
    const double pi = r->direction()(i);
    if (pi <= 0.0)
        return 0.0;
    if (shift <= 0.0)
        return pi * r->first_above(0.0);
    const double cut = shift / pi;
    return pi * r->first_above(cut) - shift * r->mass_above(cut);
}

double LevyMeasure::compensated_laplace(const TypedVector& u) const
{
    if (const auto* a = as_atomic())
    {
        double s = 0.0;
        for (const auto& atom : a->atoms)
            s += atom.rate * special::compensated_exp(u.dot(atom.z));
        return s;
    }
    const auto* r = as_radial();
    return r->compensated_laplace(u.dot(r->direction()));
}

TypedVector LevyMeasure::size_weighted_laplace(const TypedVector& u) const
{
    if (const auto* a = as_atomic())
    {
        TypedVector s = TypedVector::Zero(dim_);
        for (const auto& atom : a->atoms)
            s -= atom.rate * special::one_minus_exp(u.dot(atom.z)) * atom.z;
        return s;
    }
    const auto* r = as_radial();
    return r->size_weighted_laplace(u.dot(r->direction())) * r->direction();
}

double LevyMeasure::integrability(Eigen::Index owner) const
{
    double total = measure_moment(*this, MomentKind::truncated_second);
    const TypedVector m = first_moment();
    for (Eigen::Index j = 0; j < dim_; ++j)
        if (j != owner)
            total += m(j);
    return total;
}

double measure_moment(const LevyMeasure& measure, MomentKind kind, Eigen::Index coord)
{
    if (const auto* a = measure.as_atomic())
    {
        double s = 0.0;
        for (const auto& atom : a->atoms)
        {
            switch (kind)
            {
            case MomentKind::first:
                s += atom.rate * atom.z(coord);
                break;
            case MomentKind::truncated_second: {
                const double n = atom.z.norm();
                s += atom.rate * std::min(n, n * n);
                break;
            }
            case MomentKind::xlogx: {
                const double m = atom.z.sum();
                if (m >= 1.0)
                    s += atom.rate * m * std::log(m);
                break;
            }
            }
        }
        return s;
    }
    const auto* r = measure.as_radial();
    switch (kind)
    {
    case MomentKind::first:
        return measure.first_moment()(coord);
    case MomentKind::truncated_second: {
        const double kappa = r->direction().norm();
        const double cut = 1.0 / kappa;
        return kappa * kappa * r->second_below(cut) + kappa * r->first_above(cut);
    }
    case MomentKind::xlogx:
        return r->xlogx();
    }
    return kInf;
}

JumpSample sample_jump(const LevyMeasure& measure, Philox& rng, double eps)
{
    const auto d = measure.dimension();
    if (const auto* a = measure.as_atomic())
    {
        if (a->atoms.empty())
            throw ModelError("sample_jump: the zero measure has no jumps");
        const double total = measure.total_rate();
        double u = rng.uniform_open() * total;
        for (const auto& atom : a->atoms)
        {
            u -= atom.rate;
            if (u < 0.0)
                return {atom.z, TypedVector::Zero(d)};
        }
        return {a->atoms.back().z, TypedVector::Zero(d)};
    }
    const auto* r = measure.as_radial();
    if (!std::isfinite(eps))
        throw ModelError("sample_jump: truncation eps beyond the support");
    if (r->has_small_jumps() && !(eps > 0.0))
        throw ModelError("sample_jump: infinite-activity measure needs eps > 0");
    const double cut = std::max(eps, 0.0);
    const double size = r->sample_above(cut, rng);
    return {size * r->direction(), r->first_below(cut) * r->direction()};
}

TypedVector sample_size_biased(const LevyMeasure& measure, Eigen::Index coord, Philox& rng, double eps)
{
    if (const auto* a = measure.as_atomic())
    {
        double total = 0.0;
        for (const auto& atom : a->atoms)
            total += atom.rate * atom.z(coord);
        if (!(total > 0.0))
            throw ModelError("sample_size_biased: zero first moment in coordinate " + std::to_string(coord));
        double u = rng.uniform_open() * total;
        for (const auto& atom : a->atoms)
        {
            u -= atom.rate * atom.z(coord);
            if (u < 0.0)
                return atom.z;
        }
        return a->atoms.back().z;
    }
    const auto* r = measure.as_radial();
    if (!(r->direction()(coord) > 0.0))
        throw ModelError("sample_size_biased: zero first moment in coordinate " + std::to_string(coord));
    if (r->has_small_jumps() && r->params().beta >= 1.0 && !(eps > 0.0))
        throw ModelError("sample_size_biased: size-biased small jumps need eps > 0 when beta >= 1");
    return r->sample_size_biased_above(std::max(eps, 0.0), rng) * r->direction();
}
}  // namespace mcsbp
