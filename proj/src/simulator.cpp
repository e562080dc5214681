#include "mcsbp/simulator.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mcsbp
{
namespace
{
// Per-type constants of the jump part, fixed for the whole path.
struct JumpPlan
{
    const AtomicMeasure* atomic = nullptr;
    const RadialTail* radial = nullptr;
    double cut = 0.0;         // exact jumps below this are dropped
    double rate_cut = 0.0;    // Pi(cut, inf)
    double first_cut = 0.0;   // int_{cut}^inf r Pi(dr)
    double second_cut = 0.0;  // int_0^{cut} r^2 Pi(dr)
};

std::vector<JumpPlan> plan_jumps(const BranchingMechanism& mech, double eps)
{
    std::vector<JumpPlan> plans(static_cast<std::size_t>(mech.dimension()));
    for (Eigen::Index i = 0; i < mech.dimension(); ++i)
    {
        auto& p = plans[static_cast<std::size_t>(i)];
        const auto& m = mech.measure(i);
        if (m.is_zero())
            continue;
        if ((p.atomic = m.as_atomic()))
            continue;
        p.radial = m.as_radial();
        p.cut = p.radial->has_small_jumps() ? eps : 0.0;
        p.rate_cut = p.radial->mass_above(p.cut);
        p.first_cut = p.radial->first_above(p.cut);
        p.second_cut = p.radial->second_below(p.cut);
    }
    return plans;
}

class StepEngine
{
  public:
    StepEngine(const BranchingMechanism& mech, const SimConfig& config, Philox& rng, PathResult& out)
        : mech_(mech), config_(config), rng_(rng), out_(out), plans_(plan_jumps(mech, config.eps_jump)),
          drift_(mech.dimension())
    {
    }

    // One step of length h from state x at time t; x is updated in place.
    void step(TypedVector& x, double t, double h)
    {
        const auto d = mech_.dimension();
        drift_.noalias() = mech_.B() * x;
        double mass_before = x.sum();
        x_start_ = x;
        x.noalias() += h * drift_;
        for (Eigen::Index i = 0; i < d; ++i)
        {
            const double xi = x_start_(i);
            if (xi <= 0.0)
                continue;
            const double c = mech_.c()(i);
            if (c > 0.0)
                x(i) += std::sqrt(2.0 * c * xi * h) * normal_(rng_);
            const auto& plan = plans_[static_cast<std::size_t>(i)];
            if (plan.atomic)
                atomic_jumps(x, *plan.atomic, i, xi, t, h);
            else if (plan.radial)
                radial_jumps(x, plan, i, xi, t, h);
        }
        for (Eigen::Index i = 0; i < d; ++i)
        {
            if (std::isnan(x(i)) || std::isinf(x(i)))
            {
                std::ostringstream os;
                os << "simulate_path: non-finite state at t = " << t << " (type " << i + 1
                   << ", mass before step " << mass_before << ")";
                throw NumericalError(os.str(), x(i));
            }
            if (x(i) < 0.0)
            {
                x(i) = 0.0;
                ++out_.clamp_count;
            }
        }
    }

  private:
    long long poisson(double mean)
    {
        if (!(mean > 0.0))
            return 0;
        return poisson_(rng_, std::poisson_distribution<long long>::param_type(mean));
    }

    void record(double t, Eigen::Index i, const TypedVector& z)
    {
        if (config_.record_events)
            out_.events.push_back({t, i, z});
    }

    void atomic_jumps(TypedVector& x, const AtomicMeasure& m, Eigen::Index i, double xi, double t, double h)
    {
        for (const auto& atom : m.atoms)
        {
            const double mean = xi * atom.rate * h;
            const long long k = poisson(mean);
            x.noalias() += (static_cast<double>(k) - mean) * atom.z;
            for (long long n = 0; n < k; ++n)
                record(t + h, i, atom.z);
        }
    }

    void radial_jumps(TypedVector& x, const JumpPlan& plan, Eigen::Index i, double xi, double t, double h)
    {
        const RadialTail& r = *plan.radial;
        double exact_cut = plan.cut;
        double compensator = xi * h * plan.first_cut;
        double mean = xi * h * plan.rate_cut;
        double band = 0.0;
        if (mean > config_.jump_budget)
        {
            // Too many jumps above the cut: keep the largest ones exact, Gaussian for the rest.
            exact_cut = r.mass_quantile(config_.jump_budget / (xi * h));
            mean = config_.jump_budget;
            compensator = xi * h * r.first_above(exact_cut);
            band = std::sqrt(std::max(0.0, xi * h * (r.second_below(exact_cut) - plan.second_cut)));
            ++out_.bulk_steps;
        }
        double total = -compensator;
        const long long k = poisson(mean);
        for (long long n = 0; n < k; ++n)
        {
            const double size = r.sample_above(exact_cut, rng_);
            total += size;
            if (config_.record_events)
                record(t + h, i, size * r.direction());
        }
        if (band > 0.0)
            total += band * normal_(rng_);
        x.noalias() += total * r.direction();
    }

    const BranchingMechanism& mech_;
    const SimConfig& config_;
    Philox& rng_;
    PathResult& out_;
    std::vector<JumpPlan> plans_;
    TypedVector drift_;
    TypedVector x_start_;
    std::normal_distribution<double> normal_;
    std::poisson_distribution<long long> poisson_;
};
}  // namespace

void validate_config(const SimConfig& config)
{
    if (!(config.dt > 0.0))
        throw ModelError("SimConfig: dt must be positive");
    if (!(config.horizon >= config.dt))
        throw ModelError("SimConfig: horizon must be at least dt");
    if (!(config.eps_jump > 0.0))
        throw ModelError("SimConfig: eps_jump must be positive");
    if (config.grid_stride == 0)
        throw ModelError("SimConfig: grid_stride must be positive");
    if (!(config.jump_budget >= 1.0))
        throw ModelError("SimConfig: jump_budget must be at least 1");
    if (!(config.extinction_threshold >= 0.0))
        throw ModelError("SimConfig: extinction_threshold must be nonnegative");
}

std::size_t sim_steps(const SimConfig& config)
{
    return static_cast<std::size_t>(std::max<long long>(1, std::llround(config.horizon / config.dt)));
}

PathResult simulate_path(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                         const SimConfig& config, Philox& rng, const std::vector<Injection>& injections)
{
    validate_config(config);
    const auto d = mech.dimension();
    if (x0.size() != d || !is_nonnegative(x0) || !x0.allFinite())
        throw ModelError("simulate_path: x0 must be finite, nonnegative, dimension d");
    for (const auto& inj : injections)
        if (inj.mass.size() != d || !is_nonnegative(inj.mass))
            throw ModelError("simulate_path: injection mass must be nonnegative with dimension d");

    const std::size_t n = sim_steps(config);
    const double h = config.horizon / static_cast<double>(n);
    PathResult out;
    out.t_grid.reserve(n / config.grid_stride + 2);
    out.X.reserve(n / config.grid_stride + 2);
    StepEngine engine(mech, config, rng, out);

    TypedVector x = x0;
    std::size_t next_injection = 0;
    const auto inject = [&](std::size_t k) {
        // Grid time k*h absorbs every injection with time in ((k-1)h, kh].
        const double now = static_cast<double>(k) * h;
        while (next_injection < injections.size() && injections[next_injection].time <= now + 1e-12 * h)
            x += injections[next_injection++].mass;
    };
    const auto store = [&](double t) {
        out.t_grid.push_back(t);
        out.X.push_back(x);
    };

    inject(0);
    bool dead = false;
    if (x.sum() < config.extinction_threshold && next_injection == injections.size())
    {
        x.setZero();
        out.extinction_time = 0.0;
        dead = true;
    }
    store(0.0);
    for (std::size_t k = 1; k <= n; ++k)
    {
        const double t = k == n ? config.horizon : static_cast<double>(k) * h;
        if (!dead)
        {
            engine.step(x, static_cast<double>(k - 1) * h, h);
            inject(k);
            if (x.sum() < config.extinction_threshold)
            {
                x.setZero();
                if (next_injection == injections.size())
                {
                    out.extinction_time = t;
                    dead = true;
                }
            }
        }
        if (k % config.grid_stride == 0 || k == n)
            store(t);
    }
    out.W = track_martingale(out, spectral).W;
    return out;
}

MartingaleTrack track_martingale(const PathResult& path, const SpectralData& spectral)
{
    MartingaleTrack track;
    track.W.reserve(path.X.size());
    for (std::size_t k = 0; k < path.X.size(); ++k)
        track.W.push_back(std::exp(-spectral.lambda1 * path.t_grid[k]) * spectral.phi.dot(path.X[k]));
    track.terminal = track.W.empty() ? 0.0 : track.W.back();
    return track;
}

std::optional<double> detect_extinction(PathResult& path, double threshold)
{
    std::optional<double> when;
    for (std::size_t k = 0; k < path.X.size(); ++k)
    {
        if (!when && path.X[k].sum() < threshold)
            when = path.t_grid[k];
        if (when)
        {
            path.X[k].setZero();
            if (k < path.W.size())
                path.W[k] = 0.0;
        }
    }
    if (when)
        path.extinction_time = when;
    return when;
}
}  // namespace mcsbp
