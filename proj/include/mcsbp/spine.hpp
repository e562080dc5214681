#pragma once

#include "mcsbp/ensemble.hpp"
#include "mcsbp/laplace_flow.hpp"
#include "mcsbp/mechanism.hpp"
#include "mcsbp/simulator.hpp"
#include "mcsbp/spectral.hpp"

#include <utility>
#include <vector>

namespace mcsbp
{
/// Spine chain under the h-transform by W.
struct SpineChain
{
    Matrix L;                // L_ij = phi_i^{-1} (B^T_ij - delta_ij lambda1) phi_j
    TypedVector initial_law; // phi o x / <phi, x>
};

SpineChain spine_generator(const Matrix& B, const SpectralData& spectral, const TypedVector& x);
/// Same with x = 1, so the initial law is phi.
SpineChain spine_generator(const Matrix& B, const SpectralData& spectral);

/// Solves pi L = 0, sum pi = 1.
TypedVector stationary_law(const SpineChain& chain);

/// nu_{i,j} = (1 / B^T_ij) z_j mu_i(dz) + zero_weight delta_0.
class NuLaw
{
  public:
    NuLaw(const BranchingMechanism& mech, Eigen::Index i, Eigen::Index j);

    double zero_weight() const noexcept { return zero_weight_; }
    /// Mass of the size-biased part, 1 - zero_weight.
    double immigrant_weight() const noexcept { return 1.0 - zero_weight_; }
    /// Draw an immigrant; the zero vector with probability zero_weight.
    TypedVector sample(Philox& rng, double eps) const;

  private:
    const LevyMeasure* source_ = nullptr;
    Eigen::Index d_ = 0;
    Eigen::Index j_ = 0;
    double zero_weight_ = 1.0;
};

NuLaw nu_measure(const BranchingMechanism& mech, Eigen::Index i, Eigen::Index j);

/// Rate of discontinuous immigration along a spine at type i: int z_i mu_i(dz),
/// restricted to sizes above eps when the size-biased small-jump law is not finite.
double discontinuous_rate(const BranchingMechanism& mech, Eigen::Index i, double eps);

enum class ImmigrationKind
{
    continuous,
    discontinuous,
    jump
};

const char* to_string(ImmigrationKind kind);

struct ImmigrationEvent
{
    double time = 0.0;
    ImmigrationKind kind = ImmigrationKind::continuous;
    Eigen::Index type = 0;  // spine position at the event
    TypedVector mass;
};

/// The spine path and everything that immigrates along it up to the horizon.
struct SpineRecord
{
    std::vector<std::pair<double, Eigen::Index>> spine;  // (entry time, type), first entry at 0
    std::vector<ImmigrationEvent> events;                 // sorted by time
};

inline constexpr std::size_t kDefaultImmigrantCap = 100000;

/// Substreams of rng: 1 spine, 2 discontinuous, 3 jump, 4 continuous immigration.
SpineRecord sample_spine_record(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                double horizon, double delta, double eps, Philox& rng,
                                std::size_t immigrant_cap = kDefaultImmigrantCap);

struct GammaResult
{
    SpineRecord record;
    std::vector<double> t_grid;
    std::vector<TypedVector> Gamma;
    std::vector<double> Z;  // e^{-lambda1 t} <phi, Gamma_t>
    std::size_t clamp_count = 0;
};

/// Gamma = X' + immigrants. All immigrants and X' are run as one process with mass
/// injected at immigration times (next grid point); equal in law by the branching property.
/// The population uses substream 0 of rng.
GammaResult simulate_gamma(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                           const SimConfig& config, double delta, Philox& rng,
                           std::size_t immigrant_cap = kDefaultImmigrantCap);

/// E[e^{-<f, Gamma_t>} | record] = exp(-<x0, v(t)> - sum_k <m_k, v(t - s_k)>), v = flow of f on [0, t].
double conditional_gamma_laplace(const SpineRecord& record, const TypedVector& x0, const FlowSolution& flow);

/// Mean over original-measure paths of (W_t / <phi, x0>) e^{-<f, X_t>}.
Estimate weighted_tilt_estimate(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                const TypedVector& f, double t, std::size_t n_paths, const SimConfig& config,
                                std::size_t workers = 0);

struct GammaEstimates
{
    Estimate simulated;    // MC mean of e^{-<f, Gamma_t>} from full path simulation
    Estimate conditional;  // MC mean of conditional_gamma_laplace over spine records
    Estimate Z;            // MC mean of Z_t
    std::size_t immigrants = 0;
};

/// Paths k use Philox(config.seed, k). Conditional estimates use n_conditional records,
/// whose first n_paths records coincide with those of the simulated paths.
GammaEstimates gamma_laplace_estimate(const BranchingMechanism& mech, const SpectralData& spectral,
                                      const TypedVector& x0, const TypedVector& f, double t, std::size_t n_paths,
                                      std::size_t n_conditional, const SimConfig& config, double delta,
                                      std::size_t workers = 0);
}  // namespace mcsbp
