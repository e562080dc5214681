#include "mcsbp/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace mcsbp
{
std::size_t worker_count(std::size_t requested)
{
    if (requested > 0)
        return requested;
    if (const char* env = std::getenv("MCSBP_THREADS"))
    {
        try
        {
            const long v = std::stol(env);
            if (v > 0)
                return static_cast<std::size_t>(v);
        }
        catch (const std::exception&)
        {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn)
{
    workers = std::min(worker_count(workers), std::max<std::size_t>(n, 1));
    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::exception_ptr error;
    std::size_t error_index = n;

    const auto body = [&] {
        for (;;)
        {
            const std::size_t k = next.fetch_add(1);
            if (k >= n)
                return;
            try
            {
                fn(k);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(guard);
                if (k < error_index)
                {
                    error_index = k;
                    error = std::current_exception();
                }
            }
        }
    };
    if (workers <= 1)
    {
        body();
    }
    else
    {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(body);
        for (auto& t : pool)
            t.join();
    }
    if (error)
        std::rethrow_exception(error);
}

Estimate estimate(const std::vector<double>& samples)
{
    Estimate e;
    e.n = samples.size();
    if (e.n == 0)
        return e;
    double sum = 0.0;
    for (double x : samples)
        sum += x;
    e.mean = sum / static_cast<double>(e.n);
    if (e.n < 2)
        return e;
    double ss = 0.0;
    for (double x : samples)
        ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
    return e;
}

double quantile(std::vector<double> data, double p)
{
    if (data.empty())
        return std::nan("");
    std::sort(data.begin(), data.end());
    const double pos = p * static_cast<double>(data.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, data.size() - 1);
    return data[lo] + (pos - static_cast<double>(lo)) * (data[hi] - data[lo]);
}

namespace
{
struct Snapshot
{
    std::vector<TypedVector> X;  // one per observation time
    std::size_t clamps = 0;
    std::size_t bulk = 0;
    bool extinct = false;
};
}  // namespace

EnsembleStats run_ensemble(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                           const SimConfig& config, std::size_t n_paths, const EnsembleRequest& request)
{
    if (n_paths < 2)
        throw ModelError("run_ensemble: need at least 2 paths");
    validate_config(config);
    const auto d = mech.dimension();
    for (const auto& f : request.test_functions)
        if (f.size() != d)
            throw ModelError("run_ensemble: test function has wrong dimension");

    SimConfig cfg = config;
    cfg.record_events = false;
    cfg.grid_stride = 1;
    const std::size_t steps = sim_steps(cfg);
    const double h = cfg.horizon / static_cast<double>(steps);
    std::vector<std::size_t> index;
    for (double t : request.times)
    {
        if (t < 0.0 || t > cfg.horizon * (1.0 + 1e-12))
            throw ModelError("run_ensemble: observation time outside [0, horizon]");
        index.push_back(static_cast<std::size_t>(std::llround(t / h)));
    }

    std::vector<Snapshot> snaps(n_paths);
    parallel_for(n_paths, request.workers, [&](std::size_t k) {
        Philox rng(cfg.seed, k);
        PathResult path = simulate_path(mech, spectral, x0, cfg, rng);
        Snapshot& s = snaps[k];
        for (std::size_t idx : index)
            s.X.push_back(path.X[idx]);
        s.clamps = path.clamp_count;
        s.bulk = path.bulk_steps;
        s.extinct = path.extinction_time.has_value();
    });

    EnsembleStats stats;
    stats.n_paths = n_paths;
    std::size_t extinct = 0;
    for (const auto& s : snaps)
    {
        stats.clamp_count += s.clamps;
        stats.bulk_steps += s.bulk;
        extinct += s.extinct ? 1 : 0;
    }
    stats.extinction_fraction = static_cast<double>(extinct) / static_cast<double>(n_paths);

    const TypedVector target = spectral.phi_hat / spectral.phi_hat.sum();
    for (std::size_t o = 0; o < index.size(); ++o)
    {
        ObservationStats obs;
        obs.t = static_cast<double>(index[o]) * h;
        const double scale = std::exp(-spectral.lambda1 * obs.t);
        obs.mean_X.resize(d);
        obs.se_X.resize(d);
        std::vector<double> col(n_paths);
        for (Eigen::Index i = 0; i < d; ++i)
        {
            for (std::size_t k = 0; k < n_paths; ++k)
                col[k] = snaps[k].X[o](i);
            const Estimate e = estimate(col);
            obs.mean_X(i) = e.mean;
            obs.se_X(i) = e.se;
        }
        obs.W_samples.resize(n_paths);
        obs.mass_samples.resize(n_paths);
        for (std::size_t k = 0; k < n_paths; ++k)
        {
            obs.W_samples[k] = scale * spectral.phi.dot(snaps[k].X[o]);
            obs.mass_samples[k] = snaps[k].X[o].sum();
        }
        obs.W = estimate(obs.W_samples);
        for (double p : stats.probs)
            obs.W_quantiles.push_back(quantile(obs.W_samples, p));

        std::vector<double> dir;
        std::vector<std::vector<double>> ratios(static_cast<std::size_t>(d));
        for (std::size_t k = 0; k < n_paths; ++k)
        {
            const TypedVector& x = snaps[k].X[o];
            const double mass = x.sum();
            if (!(mass > request.survival_threshold))
                continue;
            dir.push_back((x / mass - target).lpNorm<1>());
            const double w = spectral.phi.dot(x);
            for (Eigen::Index i = 0; i < d; ++i)
                ratios[static_cast<std::size_t>(i)].push_back(x(i) / (w * spectral.phi_hat(i)));
        }
        obs.survivors = dir.size();
        obs.survival_fraction = static_cast<double>(dir.size()) / static_cast<double>(n_paths);
        for (double p : stats.probs)
            obs.direction_error_quantiles.push_back(quantile(dir, p));
        for (const auto& r : ratios)
            obs.ratio_medians.push_back(quantile(r, 0.5));

        for (const auto& f : request.test_functions)
        {
            for (std::size_t k = 0; k < n_paths; ++k)
                col[k] = std::exp(-f.dot(snaps[k].X[o]));
            obs.laplace.push_back(estimate(col));
        }
        stats.observations.push_back(std::move(obs));
    }
    return stats;
}
}  // namespace mcsbp
