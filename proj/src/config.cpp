#include "mcsbp/config.hpp"

#include <cstdio>
#include <fstream>

namespace mcsbp
{
using nlohmann::json;

TypedVector to_vector(const json& j, const std::string& key)
{
    if (!j.is_array())
        throw ModelError("config: '" + key + "' must be an array of numbers");
    TypedVector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
    {
        if (!j[i].is_number())
            throw ModelError("config: '" + key + "' must be an array of numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Matrix to_matrix(const json& j, const std::string& key)
{
    if (!j.is_array() || j.empty())
        throw ModelError("config: '" + key + "' must be a non-empty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Matrix m(rows, static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index i = 0; i < rows; ++i)
    {
        const TypedVector row = to_vector(j[static_cast<std::size_t>(i)], key);
        if (row.size() != m.cols())
            throw ModelError("config: '" + key + "' has ragged rows");
        m.row(i) = row.transpose();
    }
    return m;
}

namespace
{
json from_vector(const TypedVector& v)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

json from_matrix(const Matrix& m)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        out.push_back(from_vector(m.row(i).transpose()));
    return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try
    {
        return j.at(key).get<T>();
    }
    catch (const json::exception&)
    {
        throw ModelError(std::string("config: '") + key + "' has the wrong type");
    }
}

std::vector<double> list_or(const json& j, const char* key, std::vector<double> fallback)
{
    if (!j.contains(key))
        return fallback;
    const TypedVector v = to_vector(j.at(key), key);
    return {v.data(), v.data() + v.size()};
}

LevyMeasure parse_measure(const json& j, Eigen::Index d)
{
    const std::string type = get_or<std::string>(j, "type", "zero");
    if (type == "zero")
        return LevyMeasure::zero(d);
    if (type == "atomic")
    {
        std::vector<Atom> atoms;
        for (const auto& a : j.at("atoms"))
            atoms.push_back({to_vector(a.at("z"), "z"), get_or<double>(a, "rate", 0.0)});
        return LevyMeasure::atomic(std::move(atoms));
    }
    if (type == "radial")
    {
        RadialTailParams p;
        p.direction = to_vector(j.at("direction"), "direction");
        p.alpha = get_or(j, "alpha", p.alpha);
        p.gamma = get_or(j, "gamma", p.gamma);
        p.r0 = get_or(j, "r0", p.r0);
        p.weight = get_or(j, "weight", p.weight);
        p.beta = get_or(j, "beta", p.beta);
        p.small_weight = get_or(j, "small_weight", p.small_weight);
        return LevyMeasure::radial(p);
    }
    throw ModelError("config: unknown measure type '" + type + "'");
}

json measure_to_json(const LevyMeasure& m)
{
    if (m.is_zero() && m.is_atomic())
        return {{"type", "zero"}};
    if (const auto* a = m.as_atomic())
    {
        json atoms = json::array();
        for (const auto& atom : a->atoms)
            atoms.push_back({{"z", from_vector(atom.z)}, {"rate", atom.rate}});
        return {{"type", "atomic"}, {"atoms", atoms}};
    }
    const auto& p = m.as_radial()->params();
    return {{"type", "radial"}, {"direction", from_vector(p.direction)}, {"alpha", p.alpha}, {"gamma", p.gamma},
            {"r0", p.r0}, {"weight", p.weight}, {"beta", p.beta}, {"small_weight", p.small_weight}};
}

SimConfig parse_sim(const json& j)
{
    SimConfig s;
    s.dt = get_or(j, "dt", s.dt);
    s.horizon = get_or(j, "horizon", s.horizon);
    s.eps_jump = get_or(j, "eps_jump", s.eps_jump);
    s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
    s.extinction_threshold = get_or(j, "extinction_threshold", s.extinction_threshold);
    s.grid_stride = get_or<std::size_t>(j, "grid_stride", s.grid_stride);
    s.jump_budget = get_or(j, "jump_budget", s.jump_budget);
    s.record_events = get_or(j, "record_events", s.record_events);
    return s;
}

std::vector<TypedVector> parse_functions(const json& j, const char* key)
{
    std::vector<TypedVector> out;
    if (!j.contains(key))
        return out;
    const json& v = j.at(key);
    if (!v.empty() && v[0].is_number())
        out.push_back(to_vector(v, key));
    else
        for (const auto& row : v)
            out.push_back(to_vector(row, key));
    return out;
}
}  // namespace

MechanismSpec parse_mechanism(const json& j)
{
    MechanismSpec spec;
    if (!j.contains("c"))
        throw ModelError("config: mechanism needs 'c'");
    spec.c = to_vector(j.at("c"), "c");
    const Eigen::Index d = spec.c.size();
    if (j.contains("dimension") && j.at("dimension").get<Eigen::Index>() != d)
        throw ModelError("config: 'dimension' disagrees with the length of 'c'");
    if (j.contains("B_tilde"))
        spec.B_tilde = to_matrix(j.at("B_tilde"), "B_tilde");
    if (j.contains("B"))
        spec.B = to_matrix(j.at("B"), "B");
    if (j.contains("measures"))
        for (const auto& m : j.at("measures"))
            spec.measures.push_back(parse_measure(m, d));
    else
        for (Eigen::Index i = 0; i < d; ++i)
            spec.measures.push_back(LevyMeasure::zero(d));
    return spec;
}

json mechanism_to_json(const MechanismSpec& spec)
{
    json j;
    j["dimension"] = spec.c.size();
    j["c"] = from_vector(spec.c);
    if (spec.B_tilde)
        j["B_tilde"] = from_matrix(*spec.B_tilde);
    if (spec.B)
        j["B"] = from_matrix(*spec.B);
    j["measures"] = json::array();
    for (const auto& m : spec.measures)
        j["measures"].push_back(measure_to_json(m));
    return j;
}

std::string fingerprint(const json& j)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : j.dump())
    {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig parse_config(const json& j)
{
    if (!j.is_object())
        throw ModelError("config: top level must be an object");
    ExperimentConfig cfg;
    cfg.raw = j;
    cfg.fingerprint = fingerprint(j);
    cfg.name = get_or<std::string>(j, "name", "unnamed");
    if (j.contains("mechanism"))
        cfg.mechanism = parse_mechanism(j.at("mechanism"));
    if (j.contains("simulation"))
        cfg.sim = parse_sim(j.at("simulation"));
    if (j.contains("x0"))
        cfg.x0 = to_vector(j.at("x0"), "x0");
    else if (cfg.mechanism)
        cfg.x0 = TypedVector::Ones(cfg.mechanism->c.size());
    cfg.f = parse_functions(j, "f");
    cfg.T_list = list_or(j, "T_list", cfg.T_list);
    cfg.martingale_T = list_or(j, "martingale_T", cfg.martingale_T);
    cfg.paths = get_or<std::size_t>(j, "paths", cfg.paths);
    cfg.flow_dt = get_or(j, "flow_dt", cfg.flow_dt);
    cfg.t = get_or(j, "t", cfg.t);

    if (j.contains("spine"))
    {
        const json& s = j.at("spine");
        const auto fs = parse_functions(s, "f");
        if (!fs.empty())
            cfg.spine.f = fs.front();
        cfg.spine.t = get_or(s, "t", cfg.spine.t);
        cfg.spine.deltas = list_or(s, "deltas", cfg.spine.deltas);
        cfg.spine.paths = get_or<std::size_t>(s, "paths", cfg.spine.paths);
        cfg.spine.conditional_paths = get_or<std::size_t>(s, "conditional_paths", cfg.spine.conditional_paths);
    }
    if (cfg.spine.f.size() == 0)
        cfg.spine.f = cfg.f.empty() ? cfg.x0 : cfg.f.front();
    if (j.contains("slln"))
    {
        const json& s = j.at("slln");
        cfg.slln.T_list = list_or(s, "T_list", cfg.slln.T_list);
        cfg.slln.threshold = get_or(s, "threshold", cfg.slln.threshold);
        cfg.slln.ratio_tolerance = get_or(s, "ratio_tolerance", cfg.slln.ratio_tolerance);
    }
    if (j.contains("xlogx"))
    {
        const json& s = j.at("xlogx");
        XlogxSettings x;
        x.holds = parse_mechanism(s.at("holds"));
        x.fails = parse_mechanism(s.at("fails"));
        x.T_list = list_or(s, "T_list", x.T_list);
        x.below_factor = get_or(s, "below_factor", x.below_factor);
        x.below_fraction = get_or(s, "below_fraction", x.below_fraction);
        x.survivor_factor = get_or(s, "survivor_factor", x.survivor_factor);
        if (s.contains("survivor_median_floor"))
            x.survivor_median_floor = s.at("survivor_median_floor").get<double>();
        cfg.xlogx = std::move(x);
    }
    if (cfg.mechanism && cfg.x0.size() != cfg.mechanism->c.size())
        throw ModelError("config: 'x0' has the wrong dimension");
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ModelError("config: cannot open " + path);
    json j;
    try
    {
        in >> j;
    }
    catch (const json::parse_error& e)
    {
        throw ModelError("config: " + path + ": " + e.what());
    }
    return parse_config(j);
}
}  // namespace mcsbp
