#pragma once

#include "mcsbp/mechanism.hpp"
#include "mcsbp/simulator.hpp"
#include "mcsbp/spectral.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace mcsbp
{
/// Worker threads: `requested` if nonzero, else $MCSBP_THREADS, else hardware concurrency.
std::size_t worker_count(std::size_t requested = 0);

/// Calls fn(k) for k in [0, n) on a pool of workers. The first exception (lowest k) is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct Estimate
{
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Sample mean and standard error sd / sqrt(n), summed in index order.
Estimate estimate(const std::vector<double>& samples);

/// Linear-interpolation quantile of unsorted data (numpy's default rule). NaN when empty.
double quantile(std::vector<double> data, double p);

inline const std::vector<double> kDefaultProbs{0.05, 0.25, 0.5, 0.75, 0.95};

struct ObservationStats
{
    double t = 0.0;
    TypedVector mean_X;
    TypedVector se_X;
    Estimate W;
    std::vector<double> W_quantiles;  // at EnsembleStats::probs
    double survival_fraction = 0.0;
    std::size_t survivors = 0;
    std::vector<double> direction_error_quantiles;  // survivors only
    std::vector<double> ratio_medians;              // per type, survivors only
    std::vector<Estimate> laplace;                  // one per requested test function
    std::vector<double> W_samples;                  // per path, index order; not serialised
    std::vector<double> mass_samples;               // <1, X_t> per path
};

struct EnsembleStats
{
    std::size_t n_paths = 0;
    std::vector<double> probs = kDefaultProbs;
    std::vector<ObservationStats> observations;
    std::size_t clamp_count = 0;
    std::size_t bulk_steps = 0;
    double extinction_fraction = 0.0;
};

struct EnsembleRequest
{
    std::vector<double> times;                  // observation times, each <= horizon
    std::vector<TypedVector> test_functions;    // Laplace means e^{-<f, X_t>}
    double survival_threshold = 1e-6;
    std::size_t workers = 0;
};

/// Paths k = 0..n-1 each use Philox(config.seed, k); statistics do not depend on workers.
EnsembleStats run_ensemble(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                           const SimConfig& config, std::size_t n_paths, const EnsembleRequest& request);
}  // namespace mcsbp
