#pragma once

#include "mcsbp/mechanism.hpp"
#include "mcsbp/rng.hpp"
#include "mcsbp/spectral.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mcsbp
{
struct SimConfig
{
    double dt = 1e-3;
    double horizon = 1.0;
    double eps_jump = 1e-3;
    std::uint64_t seed = 42;
    double extinction_threshold = 1e-12;
    std::size_t grid_stride = 1;
    /// Expected exact jumps per type per step before the (eps, R] band goes Gaussian.
    double jump_budget = 256.0;
    bool record_events = true;
};

struct JumpEvent
{
    double time = 0.0;
    Eigen::Index type = 0;
    TypedVector z;
};

/// Mass added to the state at the first grid time >= time.
struct Injection
{
    double time = 0.0;
    TypedVector mass;
};

struct PathResult
{
    std::vector<double> t_grid;
    std::vector<TypedVector> X;
    std::vector<double> W;
    std::vector<JumpEvent> events;
    std::optional<double> extinction_time;
    std::size_t clamp_count = 0;
    std::size_t bulk_steps = 0;  // type-steps that used the Gaussian band

    const TypedVector& terminal() const { return X.back(); }
};

/// Step count and exact step for a horizon; n = round(horizon / dt).
std::size_t sim_steps(const SimConfig& config);

/// Euler-Maruyama for dX = B X dt + sqrt(2 c X) dW + compensated jumps.
/// Injections must be sorted by time.
PathResult simulate_path(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                         const SimConfig& config, Philox& rng, const std::vector<Injection>& injections = {});

struct MartingaleTrack
{
    std::vector<double> W;
    double terminal = 0.0;
};

/// W_t = e^{-lambda1 t} <phi, X_t> on the stored grid.
MartingaleTrack track_martingale(const PathResult& path, const SpectralData& spectral);

/// First grid time with <1, X_t> < threshold; zeroes the state (and W) from there on.
std::optional<double> detect_extinction(PathResult& path, double threshold);

void validate_config(const SimConfig& config);
}  // namespace mcsbp
