#pragma once

#include "mcsbp/mechanism.hpp"
#include "mcsbp/simulator.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mcsbp
{
struct SpineSettings
{
    TypedVector f;
    double t = 1.0;
    std::vector<double> deltas{1e-2, 1e-3};
    std::size_t paths = 10000;
    std::size_t conditional_paths = 10000;
};

struct SllnSettings
{
    std::vector<double> T_list{2.0, 4.0, 8.0};
    double threshold = 0.05;
    double ratio_tolerance = 0.05;
};

struct XlogxSettings
{
    MechanismSpec holds;
    MechanismSpec fails;
    std::vector<double> T_list{2.0, 4.0, 8.0};
    double below_factor = 0.01;
    double below_fraction = 0.9;
    double survivor_factor = 0.05;
    /// Lower bound for the holding tail's survivor median of W_T at the last T.
    std::optional<double> survivor_median_floor;
};

/// Everything one CLI invocation needs. See configs/README.md for the schema.
struct ExperimentConfig
{
    std::string name;
    std::optional<MechanismSpec> mechanism;
    SimConfig sim;
    TypedVector x0;
    std::vector<TypedVector> f;
    std::vector<double> T_list{0.5, 1.0, 2.0};
    std::vector<double> martingale_T{1.0, 2.0, 4.0};
    std::size_t paths = 10000;
    double flow_dt = 1e-3;
    double t = 1.0;
    SpineSettings spine;
    SllnSettings slln;
    std::optional<XlogxSettings> xlogx;
    nlohmann::json raw;
    std::string fingerprint;
};

MechanismSpec parse_mechanism(const nlohmann::json& j);
nlohmann::json mechanism_to_json(const MechanismSpec& spec);

/// Throws ModelError with the offending key on schema violations.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a of the canonical (sorted-key) dump, as 16 hex digits.
std::string fingerprint(const nlohmann::json& j);

TypedVector to_vector(const nlohmann::json& j, const std::string& key);
Matrix to_matrix(const nlohmann::json& j, const std::string& key);
}  // namespace mcsbp
