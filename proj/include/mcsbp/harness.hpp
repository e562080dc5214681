#pragma once

#include "mcsbp/config.hpp"
#include "mcsbp/ensemble.hpp"
#include "mcsbp/laplace_flow.hpp"
#include "mcsbp/spine.hpp"

#include "json.hpp"

#include <cstdint>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace mcsbp
{
inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kSeMultiplier = 3.0;

/// One pass/fail decision. `value` compared against `threshold` by `relation` ("<=", ">=", "<", ">", "==").
struct Criterion
{
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation;
    std::string detail;
};

/// Long-format statistic: (series, t, quantity) -> value, se (NaN when not applicable).
struct StatRow
{
    std::string series;
    double t = 0.0;
    std::string quantity;
    double value = 0.0;
    double se = 0.0;
};

struct ExperimentReport
{
    int schema_version = kReportSchemaVersion;
    std::string experiment;
    std::string fingerprint;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    double se_multiplier = kSeMultiplier;
    /// Number of simultaneous k-SE comparisons; recorded, not applied to the multiplier.
    std::size_t comparisons = 0;
    std::vector<std::pair<std::string, std::string>> info;
    std::vector<StatRow> stats;
    std::vector<Criterion> criteria;
    double runtime_seconds = 0.0;

    bool passed() const;
    void add_stat(std::string series, double t, std::string quantity, double value, double se = std::nan(""));
    /// Appends and returns the criterion; `passed` is recomputed from value, threshold, relation.
    const Criterion& add_criterion(std::string name, double value, std::string relation, double threshold,
                                   std::string detail = {});
};

bool compare(double value, const std::string& relation, double threshold);

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

enum class ReportFormat
{
    csv,
    json
};

/// Writes <out_dir>/<experiment>.json, or <experiment>_stats.csv and <experiment>_criteria.csv.
/// Returns the paths written.
std::vector<std::string> emit_report(const ExperimentReport& report, ReportFormat format, const std::string& out_dir);

/// CSV column order for the stats and criteria tables.
inline const std::vector<std::string> kStatsColumns{"series", "t", "quantity", "value", "se"};
inline const std::vector<std::string> kCriteriaColumns{"name", "passed", "value", "relation", "threshold", "detail"};

/// Semigroup defects at dt0, dt0/2, ... and the least-squares order of decay.
struct OrderEstimate
{
    std::vector<double> dts;
    std::vector<double> defects;
    double order = 0.0;
};

OrderEstimate semigroup_order(const BranchingMechanism& mech, const TypedVector& f, double s, double t, double dt0,
                              int levels);

ExperimentReport validate_experiment(const MechanismSpec& spec);

ExperimentReport spectral_experiment(const Matrix& B, const std::vector<double>& t_grid);

/// Flow, theta and solver self-tests for one (x, f, t). The grid table is written into stats.
ExperimentReport laplace_experiment(const BranchingMechanism& mech, const TypedVector& x, const TypedVector& f,
                                    double t, double dt);

/// Laplace oracle, mean-matrix and martingale checks on one ensemble.
ExperimentReport ensemble_experiment(const BranchingMechanism& mech, const SpectralData& spectral,
                                     const TypedVector& x0, const SimConfig& config, std::size_t n_paths,
                                     const std::vector<double>& T_list, const std::vector<TypedVector>& fs,
                                     const std::vector<double>& martingale_T, double flow_dt,
                                     std::size_t workers = 0);

ExperimentReport slln_experiment(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                 const SimConfig& config, std::size_t n_paths, const SllnSettings& settings,
                                 std::size_t workers = 0);

ExperimentReport xlogx_experiment(const BranchingMechanism& holds, const BranchingMechanism& fails,
                                  const TypedVector& x0, const SimConfig& config, std::size_t n_paths,
                                  const XlogxSettings& settings, std::size_t workers = 0);

ExperimentReport spine_experiment(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                  const SimConfig& config, const SpineSettings& settings, double flow_dt,
                                  std::size_t workers = 0);

}  // namespace mcsbp
