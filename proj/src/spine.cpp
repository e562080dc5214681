#include "mcsbp/spine.hpp"

#include <algorithm>
#include <cmath>

namespace mcsbp
{
namespace
{
constexpr double kNuTol = 1e-12;

double exponential(Philox& rng, double rate)
{
    return -std::log(rng.uniform_open()) / rate;
}

Eigen::Index categorical(const TypedVector& weights, Philox& rng)
{
    double u = rng.uniform_open() * weights.sum();
    for (Eigen::Index i = 0; i < weights.size(); ++i)
    {
        u -= weights(i);
        if (u < 0.0)
            return i;
    }
    for (Eigen::Index i = weights.size(); i-- > 0;)
        if (weights(i) > 0.0)
            return i;
    return 0;
}

// Eps below which size-biased radial sampling needs truncation.
double size_biased_cut(const LevyMeasure& m, double eps)
{
    const auto* r = m.as_radial();
    return r && r->has_small_jumps() && r->params().beta >= 1.0 ? eps : 0.0;
}

// Poisson stream of one kind on [a, b): appends events with masses from draw().
template <class Draw>
void poisson_events(double a, double b, double rate, ImmigrationKind kind, Eigen::Index type, Philox& rng,
                    std::vector<ImmigrationEvent>& out, std::size_t cap, Draw&& draw)
{
    if (!(rate > 0.0))
        return;
    for (double s = a + exponential(rng, rate); s < b; s += exponential(rng, rate))
    {
        if (out.size() >= cap)
            throw NumericalError("simulate_gamma: immigrant cap exceeded", static_cast<double>(out.size()));
        out.push_back({s, kind, type, draw()});
    }
}

double interpolate(const FlowSolution& flow, double s, Eigen::Index i)
{
    const auto& g = flow.t_grid;
    if (s <= 0.0)
        return flow.v_values.front()(i);
    if (s >= g.back())
        return flow.v_values.back()(i);
    const double pos = s / flow.step_size;
    auto k = static_cast<std::size_t>(pos);
    k = std::min(k, g.size() - 2);
    const double w = (s - g[k]) / (g[k + 1] - g[k]);
    return (1.0 - w) * flow.v_values[k](i) + w * flow.v_values[k + 1](i);
}
}  // namespace

SpineChain spine_generator(const Matrix& B, const SpectralData& spectral, const TypedVector& x)
{
    const auto d = B.rows();
    if (x.size() != d || !is_nonnegative(x))
        throw ModelError("spine_generator: x must be nonnegative with dimension d");
    const double mass = spectral.phi.dot(x);
    if (!(mass > 0.0))
        throw ModelError("spine_generator: x = 0, h-transform undefined");
    SpineChain chain;
    chain.L = Matrix::Zero(d, d);
    const Matrix Bt = B.transpose();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            chain.L(i, j) = (Bt(i, j) - (i == j ? spectral.lambda1 : 0.0)) * spectral.phi(j) / spectral.phi(i);
    chain.initial_law = spectral.phi.cwiseProduct(x) / mass;
    return chain;
}

SpineChain spine_generator(const Matrix& B, const SpectralData& spectral)
{
    return spine_generator(B, spectral, TypedVector::Ones(B.rows()));
}

TypedVector stationary_law(const SpineChain& chain)
{
    const auto d = chain.L.rows();
    Matrix A(d + 1, d);
    A.topRows(d) = chain.L.transpose();
    A.row(d).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
    rhs(d) = 1.0;
    return A.colPivHouseholderQr().solve(rhs);
}

NuLaw::NuLaw(const BranchingMechanism& mech, Eigen::Index i, Eigen::Index j) : d_(mech.dimension()), j_(j)
{
    if (i < 0 || j < 0 || i >= d_ || j >= d_)
        throw ModelError("nu_measure: type index out of range");
    if (i == j)
        return;
    const LevyMeasure& mu = mech.measure(i);
    const double moment = mu.first_moment()(j);
    const double bt = mech.B()(j, i);  // B^T_ij
    if (moment == 0.0)
        return;
    if (!(bt > 0.0))
        throw ModelError("nu_measure: B^T_ij = 0 but int z_j mu_i > 0 (inconsistent B)");
    const double w = moment / bt;
    if (w > 1.0 + kNuTol)
        throw ModelError("nu_measure: atom at zero has negative weight (inconsistent B)");
    zero_weight_ = std::max(0.0, 1.0 - w);
    source_ = &mu;
}

TypedVector NuLaw::sample(Philox& rng, double eps) const
{
    if (!source_ || rng.uniform_open() < zero_weight_)
        return TypedVector::Zero(d_);
    return sample_size_biased(*source_, j_, rng, size_biased_cut(*source_, eps));
}

NuLaw nu_measure(const BranchingMechanism& mech, Eigen::Index i, Eigen::Index j)
{
    return NuLaw(mech, i, j);
}

double discontinuous_rate(const BranchingMechanism& mech, Eigen::Index i, double eps)
{
    const LevyMeasure& m = mech.measure(i);
    if (m.is_zero())
        return 0.0;
    if (const auto* r = m.as_radial())
        return r->direction()(i) * r->first_above(size_biased_cut(m, eps));
    return m.first_moment()(i);
}

const char* to_string(ImmigrationKind kind)
{
    switch (kind)
    {
    case ImmigrationKind::continuous:
        return "continuous";
    case ImmigrationKind::discontinuous:
        return "discontinuous";
    case ImmigrationKind::jump:
        return "jump";
    }
    return "unknown";
}

SpineRecord sample_spine_record(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                double horizon, double delta, double eps, Philox& rng, std::size_t immigrant_cap)
{
    if (spectral.cls != Criticality::supercritical)
        throw ModelError("spine: mechanism must be supercritical");
    if (!(delta > 0.0))
        throw ModelError("spine: delta must be positive");
    const auto d = mech.dimension();
    const SpineChain chain = spine_generator(mech.B(), spectral, x0);

    Philox spine_rng = rng.split(1);
    Philox disc_rng = rng.split(2);
    Philox jump_rng = rng.split(3);
    Philox cont_rng = rng.split(4);

    std::vector<NuLaw> nu;
    nu.reserve(static_cast<std::size_t>(d * d));
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            nu.emplace_back(mech, i, j);

    SpineRecord rec;
    std::vector<ImmigrationEvent> disc, jumps, cont;
    Eigen::Index eta = categorical(chain.initial_law, spine_rng);
    double s = 0.0;
    rec.spine.emplace_back(0.0, eta);
    while (s < horizon)
    {
        const double out_rate = -chain.L(eta, eta);
        const double leave = out_rate > 0.0 ? s + exponential(spine_rng, out_rate) : horizon;
        const double end = std::min(leave, horizon);

        const double c = mech.c()(eta);
        const TypedVector unit = delta * unit_vector(d, eta);
        poisson_events(s, end, 2.0 * c / delta, ImmigrationKind::continuous, eta, cont_rng, cont, immigrant_cap,
                       [&] { return unit; });
        const double rd = discontinuous_rate(mech, eta, eps);
        const LevyMeasure& mu = mech.measure(eta);
        poisson_events(s, end, rd, ImmigrationKind::discontinuous, eta, disc_rng, disc, immigrant_cap, [&] {
            return sample_size_biased(mu, eta, disc_rng, size_biased_cut(mu, eps));
        });

        if (leave >= horizon)
            break;
        TypedVector rates = chain.L.row(eta).transpose();
        rates(eta) = 0.0;
        const Eigen::Index next = categorical(rates, spine_rng);
        const TypedVector m = nu[static_cast<std::size_t>(eta * d + next)].sample(jump_rng, eps);
        jumps.push_back({leave, ImmigrationKind::jump, next, m});
        eta = next;
        s = leave;
        rec.spine.emplace_back(s, eta);
    }

    if (cont.size() + disc.size() + jumps.size() > immigrant_cap)
        throw NumericalError("simulate_gamma: immigrant cap exceeded",
                             static_cast<double>(cont.size() + disc.size() + jumps.size()));
    rec.events.reserve(cont.size() + disc.size() + jumps.size());
    rec.events.insert(rec.events.end(), cont.begin(), cont.end());
    rec.events.insert(rec.events.end(), disc.begin(), disc.end());
    rec.events.insert(rec.events.end(), jumps.begin(), jumps.end());
    std::stable_sort(rec.events.begin(), rec.events.end(),
                     [](const ImmigrationEvent& a, const ImmigrationEvent& b) { return a.time < b.time; });
    return rec;
}

GammaResult simulate_gamma(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                           const SimConfig& config, double delta, Philox& rng, std::size_t immigrant_cap)
{
    GammaResult out;
    out.record = sample_spine_record(mech, spectral, x0, config.horizon, delta, config.eps_jump, rng, immigrant_cap);
    std::vector<Injection> injections;
    injections.reserve(out.record.events.size());
    for (const auto& e : out.record.events)
        if (e.mass.sum() > 0.0)
            injections.push_back({e.time, e.mass});
    Philox pop = rng.split(0);
    PathResult path = simulate_path(mech, spectral, x0, config, pop, injections);
    out.t_grid = std::move(path.t_grid);
    out.Gamma = std::move(path.X);
    out.Z = std::move(path.W);
    out.clamp_count = path.clamp_count;
    return out;
}

double conditional_gamma_laplace(const SpineRecord& record, const TypedVector& x0, const FlowSolution& flow)
{
    const double t = flow.t_grid.back();
    double exponent = x0.dot(flow.terminal());
    for (const auto& e : record.events)
    {
        if (e.time > t)
            break;
        for (Eigen::Index i = 0; i < e.mass.size(); ++i)
            if (e.mass(i) != 0.0)
                exponent += e.mass(i) * interpolate(flow, t - e.time, i);
    }
    return std::exp(-exponent);
}

Estimate weighted_tilt_estimate(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                const TypedVector& f, double t, std::size_t n_paths, const SimConfig& config,
                                std::size_t workers)
{
    const double mass = spectral.phi.dot(x0);
    if (!(mass > 0.0))
        throw ModelError("weighted_tilt_estimate: x0 = 0");
    SimConfig cfg = config;
    cfg.horizon = t;
    cfg.record_events = false;
    cfg.grid_stride = sim_steps(cfg);
    std::vector<double> samples(n_paths);
    parallel_for(n_paths, workers, [&](std::size_t k) {
        Philox rng(cfg.seed, k);
        const PathResult path = simulate_path(mech, spectral, x0, cfg, rng);
        samples[k] = path.W.back() / mass * std::exp(-f.dot(path.terminal()));
    });
    return estimate(samples);
}

GammaEstimates gamma_laplace_estimate(const BranchingMechanism& mech, const SpectralData& spectral,
                                      const TypedVector& x0, const TypedVector& f, double t, std::size_t n_paths,
                                      std::size_t n_conditional, const SimConfig& config, double delta,
                                      std::size_t workers)
{
    SimConfig cfg = config;
    cfg.horizon = t;
    cfg.record_events = false;
    cfg.grid_stride = sim_steps(cfg);
    const FlowSolution flow = solve_v(mech, f, t, cfg.dt);

    std::vector<double> sim(n_paths), z(n_paths), cond(std::max(n_paths, n_conditional));
    std::vector<std::size_t> counts(cond.size());
    parallel_for(cond.size(), workers, [&](std::size_t k) {
        Philox rng(cfg.seed, k);
        if (k < n_paths)
        {
            const GammaResult g = simulate_gamma(mech, spectral, x0, cfg, delta, rng);
            sim[k] = std::exp(-f.dot(g.Gamma.back()));
            z[k] = g.Z.back();
            cond[k] = conditional_gamma_laplace(g.record, x0, flow);
            counts[k] = g.record.events.size();
        }
        else
        {
            const SpineRecord rec = sample_spine_record(mech, spectral, x0, t, delta, cfg.eps_jump, rng);
            cond[k] = conditional_gamma_laplace(rec, x0, flow);
            counts[k] = rec.events.size();
        }
    });
    GammaEstimates out;
    out.simulated = estimate(sim);
    out.Z = estimate(z);
    out.conditional = estimate(cond);
    for (std::size_t c : counts)
        out.immigrants += c;
    return out;
}
}  // namespace mcsbp
