#include "mcsbp/harness.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace mcsbp
{
using nlohmann::json;

namespace
{
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string vec_label(const TypedVector& v)
{
    std::ostringstream os;
    os << "(";
    for (Eigen::Index i = 0; i < v.size(); ++i)
        os << (i ? "," : "") << v(i);
    os << ")";
    return os.str();
}

std::string num_label(double x)
{
    std::ostringstream os;
    os << x;
    return os.str();
}

// |a - b| / se as a z-score; exact agreement with se = 0 counts as 0.
double z_score(double diff, double se)
{
    diff = std::abs(diff);
    if (se > 0.0)
        return diff / se;
    return diff <= 1e-14 ? 0.0 : std::numeric_limits<double>::infinity();
}

json number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    return x;
}

double number(const json& j)
{
    if (j.is_string())
    {
        const auto s = j.get<std::string>();
        if (s == "nan")
            return std::nan("");
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        throw ModelError("report: bad number '" + s + "'");
    }
    if (j.is_null())
        return std::nan("");
    return j.get<double>();
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
    {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::vector<double> sorted_unique(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

const ObservationStats& at_time(const EnsembleStats& stats, double t)
{
    const ObservationStats* best = &stats.observations.front();
    for (const auto& o : stats.observations)
        if (std::abs(o.t - t) < std::abs(best->t - t))
            best = &o;
    return *best;
}

void add_observation_stats(ExperimentReport& r, const std::string& series, const EnsembleStats& stats)
{
    r.add_stat(series, 0.0, "clamp_count", static_cast<double>(stats.clamp_count));
    r.add_stat(series, 0.0, "bulk_steps", static_cast<double>(stats.bulk_steps));
    r.add_stat(series, 0.0, "extinction_fraction", stats.extinction_fraction);
    for (const auto& o : stats.observations)
    {
        for (Eigen::Index i = 0; i < o.mean_X.size(); ++i)
            r.add_stat(series, o.t, "mean_X" + std::to_string(i + 1), o.mean_X(i), o.se_X(i));
        r.add_stat(series, o.t, "mean_W", o.W.mean, o.W.se);
        for (std::size_t q = 0; q < stats.probs.size(); ++q)
        {
            r.add_stat(series, o.t, "W_q" + num_label(stats.probs[q]), o.W_quantiles[q]);
            r.add_stat(series, o.t, "D_q" + num_label(stats.probs[q]), o.direction_error_quantiles[q]);
        }
        r.add_stat(series, o.t, "survival_fraction", o.survival_fraction);
    }
}
}  // namespace

bool compare(double value, const std::string& relation, double threshold)
{
    if (relation == "<=")
        return value <= threshold;
    if (relation == ">=")
        return value >= threshold;
    if (relation == "<")
        return value < threshold;
    if (relation == ">")
        return value > threshold;
    if (relation == "==")
        return value == threshold;
    throw ModelError("unknown relation '" + relation + "'");
}

bool ExperimentReport::passed() const
{
    return std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.passed; });
}

void ExperimentReport::add_stat(std::string series, double t, std::string quantity, double value, double se)
{
    stats.push_back({std::move(series), t, std::move(quantity), value, se});
}

const Criterion& ExperimentReport::add_criterion(std::string name, double value, std::string relation,
                                                 double threshold, std::string detail)
{
    Criterion c{std::move(name), false, value, threshold, std::move(relation), std::move(detail)};
    c.passed = compare(c.value, c.relation, c.threshold);
    criteria.push_back(std::move(c));
    return criteria.back();
}

json report_to_json(const ExperimentReport& r)
{
    json j;
    j["schema_version"] = r.schema_version;
    j["experiment"] = r.experiment;
    j["fingerprint"] = r.fingerprint;
    j["seed"] = r.seed;
    j["n_paths"] = r.n_paths;
    j["se_multiplier"] = number(r.se_multiplier);
    j["comparisons"] = r.comparisons;
    j["runtime_seconds"] = number(r.runtime_seconds);
    j["passed"] = r.passed();
    j["info"] = json::array();
    for (const auto& [k, v] : r.info)
        j["info"].push_back({k, v});
    j["criteria"] = json::array();
    for (const auto& c : r.criteria)
        j["criteria"].push_back({{"name", c.name},
                                 {"passed", c.passed},
                                 {"value", number(c.value)},
                                 {"relation", c.relation},
                                 {"threshold", number(c.threshold)},
                                 {"detail", c.detail}});
    j["stats"] = json::array();
    for (const auto& s : r.stats)
        j["stats"].push_back({{"series", s.series},
                              {"t", number(s.t)},
                              {"quantity", s.quantity},
                              {"value", number(s.value)},
                              {"se", number(s.se)}});
    return j;
}

ExperimentReport report_from_json(const json& j)
{
    ExperimentReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kReportSchemaVersion)
        throw ModelError("report: unsupported schema version " + std::to_string(r.schema_version));
    r.experiment = j.at("experiment").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_paths = j.at("n_paths").get<std::size_t>();
    r.se_multiplier = number(j.at("se_multiplier"));
    r.comparisons = j.at("comparisons").get<std::size_t>();
    r.runtime_seconds = number(j.at("runtime_seconds"));
    for (const auto& kv : j.at("info"))
        r.info.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    for (const auto& c : j.at("criteria"))
        r.criteria.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(), number(c.at("value")),
                              number(c.at("threshold")), c.at("relation").get<std::string>(),
                              c.at("detail").get<std::string>()});
    for (const auto& s : j.at("stats"))
        r.stats.push_back({s.at("series").get<std::string>(), number(s.at("t")), s.at("quantity").get<std::string>(),
                           number(s.at("value")), number(s.at("se"))});
    return r;
}

std::vector<std::string> emit_report(const ExperimentReport& r, ReportFormat format, const std::string& out_dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    const auto open = [&](const std::string& name) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path);
        if (!out)
            throw ModelError("emit_report: cannot write " + path);
        written.push_back(path);
        return out;
    };
    if (format == ReportFormat::json)
    {
        auto out = open(r.experiment + ".json");
        out << report_to_json(r).dump(2) << "\n";
        return written;
    }
    {
        auto out = open(r.experiment + "_stats.csv");
        for (std::size_t k = 0; k < kStatsColumns.size(); ++k)
            out << (k ? "," : "") << kStatsColumns[k];
        out << "\n";
        for (const auto& s : r.stats)
            out << csv_field(s.series) << "," << csv_number(s.t) << "," << csv_field(s.quantity) << ","
                << csv_number(s.value) << "," << csv_number(s.se) << "\n";
    }
    {
        auto out = open(r.experiment + "_criteria.csv");
        for (std::size_t k = 0; k < kCriteriaColumns.size(); ++k)
            out << (k ? "," : "") << kCriteriaColumns[k];
        out << "\n";
        for (const auto& c : r.criteria)
            out << csv_field(c.name) << "," << (c.passed ? "true" : "false") << "," << csv_number(c.value) << ","
                << c.relation << "," << csv_number(c.threshold) << "," << csv_field(c.detail) << "\n";
    }
    return written;
}

ExperimentReport validate_experiment(const MechanismSpec& spec)
{
    const auto start = Clock::now();
    ExperimentReport r;
    r.experiment = "validate";
    const ValidationReport v = validate(spec);
    for (const auto& c : v.checks)
        r.add_criterion(c.name, c.passed ? 1.0 : 0.0, "==", 1.0, c.detail);
    if (v.B)
        for (Eigen::Index i = 0; i < v.B->rows(); ++i)
            for (Eigen::Index j = 0; j < v.B->cols(); ++j)
                r.add_stat("B", 0.0, "B" + std::to_string(i + 1) + std::to_string(j + 1), (*v.B)(i, j));
    if (v.valid())
    {
        const BranchingMechanism mech(spec);
        const XlogxVerdict x = check_xlogx(mech);
        r.info.emplace_back("xlogx", x.holds ? "holds" : "fails");
        for (std::size_t i = 0; i < x.integrals.size(); ++i)
            r.add_stat("xlogx", 0.0, "I" + std::to_string(i + 1), x.integrals[i]);
        r.add_stat("psi", 0.0, "max_abs_psi_at_zero",
                   evaluate_psi(mech, TypedVector::Zero(mech.dimension())).cwiseAbs().maxCoeff());
    }
    r.runtime_seconds = seconds_since(start);
    return r;
}

ExperimentReport spectral_experiment(const Matrix& B, const std::vector<double>& t_grid)
{
    const auto start = Clock::now();
    ExperimentReport r;
    r.experiment = "spectral";
    const SpectralData s = perron(B);
    const auto d = B.rows();
    r.info.emplace_back("class", to_string(s.cls));
    r.add_stat("perron", 0.0, "lambda1", s.lambda1);
    for (Eigen::Index i = 0; i < d; ++i)
    {
        r.add_stat("perron", 0.0, "phi" + std::to_string(i + 1), s.phi(i));
        r.add_stat("perron", 0.0, "phi_hat" + std::to_string(i + 1), s.phi_hat(i));
    }
    r.add_stat("perron", 0.0, "m_phi", s.m_phi);
    r.add_stat("perron", 0.0, "M_phi", s.M_phi);

    const double right = (B.transpose() * s.phi - s.lambda1 * s.phi).cwiseAbs().maxCoeff();
    const double left = (B * s.phi_hat - s.lambda1 * s.phi_hat).cwiseAbs().maxCoeff();
    r.add_criterion("right eigen-residual", right, "<=", 1e-10);
    r.add_criterion("left eigen-residual", left, "<=", 1e-10);
    r.add_criterion("<phi,1> = 1", std::abs(s.phi.sum() - 1.0), "<=", 1e-12);
    r.add_criterion("<phi,phi_hat> = 1", std::abs(s.phi.dot(s.phi_hat) - 1.0), "<=", 1e-12);
    r.add_criterion("eigenvectors positive", std::min(s.phi.minCoeff(), s.phi_hat.minCoeff()), ">", 0.0);

    if (d > 1)
    {
        // Reference gap from a general eigensolver; only used to judge the fit.
        const Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(B.transpose()).eigenvalues();
        double second = -std::numeric_limits<double>::infinity();
        bool skipped = false;
        for (Eigen::Index k = 0; k < ev.size(); ++k)
        {
            if (!skipped && std::abs(ev(k) - std::complex<double>(s.lambda1, 0.0)) < 1e-8 * std::max(1.0, max_abs(B)))
            {
                skipped = true;
                continue;
            }
            second = std::max(second, ev(k).real());
        }
        const double gap = s.lambda1 - second;
        const DecayFit fit = check_decay(s, B, t_grid);
        for (std::size_t k = 0; k < fit.t_grid.size(); ++k)
            r.add_stat("decay", fit.t_grid[k], "deviation", fit.deviation[k]);
        r.add_stat("decay", 0.0, "c1", fit.c1);
        r.add_stat("decay", 0.0, "c2", fit.c2);
        r.add_stat("decay", 0.0, "c3_sup", fit.c3);
        r.add_stat("decay", 0.0, "fit_residual", fit.residual);
        r.add_stat("decay", 0.0, "spectral_gap", gap);
        r.add_criterion("fitted decay rate vs spectral gap (relative)", std::abs(fit.c2 - gap) / gap, "<=", 0.01,
                        "c2 = " + num_label(fit.c2) + ", gap = " + num_label(gap));
    }
    r.runtime_seconds = seconds_since(start);
    return r;
}

OrderEstimate semigroup_order(const BranchingMechanism& mech, const TypedVector& f, double s, double t, double dt0,
                              int levels)
{
    OrderEstimate out;
    double dt = dt0;
    for (int k = 0; k < levels; ++k, dt *= 0.5)
    {
        out.dts.push_back(dt);
        out.defects.push_back(semigroup_check(mech, f, s, t, dt));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < out.dts.size(); ++k)
    {
        if (!(out.defects[k] > 0.0))
            continue;
        const double x = std::log(out.dts[k]), y = std::log(out.defects[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n >= 2)
        out.order = (static_cast<double>(n) * sxy - sx * sy) / (static_cast<double>(n) * sxx - sx * sx);
    return out;
}

ExperimentReport laplace_experiment(const BranchingMechanism& mech, const TypedVector& x, const TypedVector& f,
                                    double t, double dt)
{
    const auto start = Clock::now();
    ExperimentReport r;
    r.experiment = "laplace";
    const auto d = mech.dimension();
    const FlowSolution flow = solve_v(mech, f, t, dt);
    std::optional<SpectralData> spectral;
    try
    {
        spectral = perron(mech.B());
    }
    catch (const ModelError&)
    {
    }
    const bool tilt = spectral && spectral->cls == Criticality::supercritical;
    std::optional<ThetaSolution> theta;
    if (tilt)
        theta = solve_theta(mech, *spectral, f, t, dt);

    double min_v = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < flow.t_grid.size(); ++k)
    {
        for (Eigen::Index i = 0; i < d; ++i)
        {
            r.add_stat("flow", flow.t_grid[k], "v" + std::to_string(i + 1), flow.v_values[k](i));
            min_v = std::min(min_v, flow.v_values[k](i));
        }
        if (theta)
            for (Eigen::Index i = 0; i < d; ++i)
                r.add_stat("flow", flow.t_grid[k], "theta" + std::to_string(i + 1), theta->theta_values[k](i));
    }
    const double laplace = std::exp(-x.dot(flow.terminal()));
    r.add_stat("summary", t, "laplace", laplace);
    r.add_stat("summary", t, "clipped", static_cast<double>(flow.clipped));
    r.add_criterion("v nonnegative", min_v, ">=", 0.0);

    const double defect = semigroup_check(mech, f, 0.5 * t, 0.5 * t, dt);
    r.add_stat("summary", t, "semigroup_defect", defect);
    r.add_criterion("semigroup defect", defect, "<=", 1e-8);

    const MeanConsistency mc = mean_consistency(mech, t, dt);
    r.add_stat("summary", t, "mean_consistency_defect", mc.defect);
    r.add_criterion("mean consistency defect (relative)", mc.defect / std::max(1.0, max_abs(mc.M)), "<=", 1e-6);

    if (theta)
    {
        const TypedVector& th = theta->terminal();
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& v : theta->theta_values)
        {
            lo = std::min(lo, v.minCoeff());
            hi = std::max(hi, v.maxCoeff());
        }
        const double tilted = laplace * th.dot(spectral->phi.cwiseProduct(x)) / spectral->phi.dot(x);
        r.add_stat("summary", t, "tilted_laplace", tilted);
        r.add_criterion("theta > 0", lo, ">", 0.0);
        r.add_criterion("theta <= 1", hi, "<=", 1.0 + 1e-12);
    }
    r.runtime_seconds = seconds_since(start);
    return r;
}

ExperimentReport ensemble_experiment(const BranchingMechanism& mech, const SpectralData& spectral,
                                     const TypedVector& x0, const SimConfig& config, std::size_t n_paths,
                                     const std::vector<double>& T_list, const std::vector<TypedVector>& fs,
                                     const std::vector<double>& martingale_T, double flow_dt, std::size_t workers)
{
    const auto start = Clock::now();
    ExperimentReport r;
    r.experiment = "simulate";
    r.seed = config.seed;
    r.n_paths = n_paths;
    std::vector<double> times = T_list;
    times.insert(times.end(), martingale_T.begin(), martingale_T.end());
    times = sorted_unique(times);
    if (times.empty())
    {
        r.runtime_seconds = seconds_since(start);
        return r;
    }
    SimConfig cfg = config;
    cfg.horizon = times.back();
    EnsembleRequest req;
    req.times = times;
    req.test_functions = fs;
    req.workers = workers;
    const EnsembleStats stats = run_ensemble(mech, spectral, x0, cfg, n_paths, req);
    add_observation_stats(r, "ensemble", stats);

    for (double T : T_list)
    {
        const ObservationStats& o = at_time(stats, T);
        for (std::size_t k = 0; k < fs.size(); ++k)
        {
            const double exact = laplace_functional(mech, x0, fs[k], T, flow_dt);
            const Estimate& e = o.laplace[k];
            r.add_stat("laplace f=" + vec_label(fs[k]), T, "mc_mean", e.mean, e.se);
            r.add_stat("laplace f=" + vec_label(fs[k]), T, "oracle", exact);
            r.add_criterion("laplace oracle f=" + vec_label(fs[k]) + " T=" + num_label(T), z_score(e.mean - exact, e.se),
                            "<=", kSeMultiplier, "mc " + num_label(e.mean) + " +- " + num_label(e.se) + ", oracle " +
                                                     num_label(exact));
        }
        const TypedVector mean = mean_matrix(mech.B(), T).M.transpose() * x0;  // x0^T M(T)
        for (Eigen::Index i = 0; i < mean.size(); ++i)
        {
            r.add_stat("mean_matrix", T, "oracle_X" + std::to_string(i + 1), mean(i));
            r.add_criterion("mean matrix X" + std::to_string(i + 1) + " T=" + num_label(T),
                            z_score(o.mean_X(i) - mean(i), o.se_X(i)), "<=", kSeMultiplier,
                            "mc " + num_label(o.mean_X(i)) + " +- " + num_label(o.se_X(i)) + ", oracle " +
                                num_label(mean(i)));
        }
    }
    const double W0 = spectral.phi.dot(x0);
    for (double T : martingale_T)
    {
        const ObservationStats& o = at_time(stats, T);
        r.add_criterion("martingale W T=" + num_label(T), z_score(o.W.mean - W0, o.W.se), "<=", kSeMultiplier,
                        "mc " + num_label(o.W.mean) + " +- " + num_label(o.W.se) + ", W0 " + num_label(W0));
    }
    r.comparisons = r.criteria.size();
    r.runtime_seconds = seconds_since(start);
    return r;
}

ExperimentReport slln_experiment(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                 const SimConfig& config, std::size_t n_paths, const SllnSettings& settings,
                                 std::size_t workers)
{
    const auto start = Clock::now();
    if (spectral.cls != Criticality::supercritical)
        throw ModelError("slln_experiment: mechanism must be supercritical");
    if (!check_xlogx(mech).holds)
        throw ModelError("slln_experiment: x log x fails for this mechanism; use the xlogx experiment");
    ExperimentReport r;
    r.experiment = "slln";
    r.seed = config.seed;
    r.n_paths = n_paths;
    const std::vector<double> times = sorted_unique(settings.T_list);
    if (times.empty())
    {
        r.runtime_seconds = seconds_since(start);
        return r;
    }
    SimConfig cfg = config;
    cfg.horizon = times.back();
    EnsembleRequest req;
    req.times = times;
    req.workers = workers;
    const EnsembleStats stats = run_ensemble(mech, spectral, x0, cfg, n_paths, req);
    add_observation_stats(r, "ensemble", stats);

    const std::size_t median = 2;  // index of 0.5 in kDefaultProbs
    double worst_increase = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < stats.observations.size(); ++k)
    {
        const auto& o = stats.observations[k];
        r.add_stat("direction", o.t, "median_D", o.direction_error_quantiles[median]);
        r.add_stat("direction", o.t, "survivors", static_cast<double>(o.survivors));
        for (std::size_t i = 0; i < o.ratio_medians.size(); ++i)
            r.add_stat("ratio", o.t, "median_ratio" + std::to_string(i + 1), o.ratio_medians[i]);
        if (k > 0)
            worst_increase = std::max(worst_increase, o.direction_error_quantiles[median] -
                                                          stats.observations[k - 1].direction_error_quantiles[median]);
    }
    if (stats.observations.size() > 1)
        r.add_criterion("median D_T non-increasing", worst_increase, "<=", 0.0);
    const auto& last = stats.observations.back();
    r.add_criterion("median D_T at T=" + num_label(last.t), last.direction_error_quantiles[median], "<",
                    settings.threshold);
    double ratio_dev = 0.0;
    for (double m : last.ratio_medians)
        ratio_dev = std::max(ratio_dev, std::abs(m - 1.0));
    r.add_criterion("median ratio e^{-lambda1 T} X_T(k) / (W_T phi_hat(k)) near 1", ratio_dev, "<=",
                    settings.ratio_tolerance);
    r.runtime_seconds = seconds_since(start);
    return r;
}

namespace
{
// Distribution-free lower confidence bound for a median: the order statistic
// n/2 - z sqrt(n)/2 from a binomial normal approximation, z = 3.09 (one-sided 0.999).
double median_lower_bound(std::vector<double> w)
{
    if (w.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(w.size());
    const double k = std::floor(0.5 * n - 0.5 * 3.09 * std::sqrt(n));
    if (k < 0.0)
        return 0.0;
    const auto idx = static_cast<std::size_t>(k);
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(idx), w.end());
    return w[idx];
}
}  // namespace

ExperimentReport xlogx_experiment(const BranchingMechanism& holds, const BranchingMechanism& fails,
                                  const TypedVector& x0, const SimConfig& config, std::size_t n_paths,
                                  const XlogxSettings& settings, std::size_t workers)
{
    const auto start = Clock::now();
    if (holds.dimension() != fails.dimension() ||
        max_abs(holds.B() - fails.B()) > 1e-9 * std::max(1.0, max_abs(holds.B())) || holds.c() != fails.c())
        throw ModelError("xlogx_experiment: the two mechanisms must share B and c");
    // Mislabelled pairs still run; the verdict criteria then fail and the branches show what they are.
    const XlogxVerdict vh = check_xlogx(holds), vf = check_xlogx(fails);
    const SpectralData spectral = perron(holds.B());
    if (spectral.cls != Criticality::supercritical)
        throw ModelError("xlogx_experiment: mechanisms must be supercritical");

    ExperimentReport r;
    r.experiment = "xlogx";
    r.seed = config.seed;
    r.n_paths = n_paths;
    r.add_criterion("holds: x log x verdict", vh.holds ? 1.0 : 0.0, "==", 1.0);
    r.add_criterion("fails: x log x verdict", vf.holds ? 1.0 : 0.0, "==", 0.0);
    const std::vector<double> times = sorted_unique(settings.T_list);
    if (times.empty())
    {
        r.runtime_seconds = seconds_since(start);
        return r;
    }
    SimConfig cfg = config;
    cfg.horizon = times.back();
    EnsembleRequest req;
    req.times = times;
    req.workers = workers;
    const EnsembleStats sh = run_ensemble(holds, spectral, x0, cfg, n_paths, req);
    const EnsembleStats sf = run_ensemble(fails, spectral, x0, cfg, n_paths, req);
    add_observation_stats(r, "holds", sh);
    add_observation_stats(r, "fails", sf);
    const double W0 = spectral.phi.dot(x0);

    const auto fraction_below = [&](const ObservationStats& o) {
        std::size_t n = 0;
        for (double w : o.W_samples)
            n += w < settings.below_factor * W0 ? 1 : 0;
        return static_cast<double>(n) / static_cast<double>(o.W_samples.size());
    };
    const auto survivor_W = [&](const ObservationStats& o) {
        std::vector<double> w;
        for (std::size_t k = 0; k < o.W_samples.size(); ++k)
            if (o.mass_samples[k] > req.survival_threshold)
                w.push_back(o.W_samples[k]);
        return w;
    };

    double min_step = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < times.size(); ++k)
    {
        const auto& oh = sh.observations[k];
        const auto& of = sf.observations[k];
        for (const auto& [name, o] : {std::pair<std::string, const ObservationStats*>{"holds", &oh},
                                      std::pair<std::string, const ObservationStats*>{"fails", &of}})
        {
            const auto sw = survivor_W(*o);
            r.add_stat(name, o->t, "fraction_W_below", fraction_below(*o));
            r.add_stat(name, o->t, "survivor_median_W", quantile(sw, 0.5));
            r.add_stat(name, o->t, "survivor_median_W_lcb", median_lower_bound(sw));
            r.add_criterion(name + ": martingale mean W T=" + num_label(o->t), z_score(o->W.mean - W0, o->W.se), "<=",
                            kSeMultiplier,
                            "mc " + num_label(o->W.mean) + " +- " + num_label(o->W.se) + ", W0 " + num_label(W0));
        }
        if (k > 0)
            min_step = std::min(min_step, fraction_below(of) - fraction_below(sf.observations[k - 1]));
    }
    const auto& lh = sh.observations.back();
    const auto& lf = sf.observations.back();
    if (times.size() > 1)
        r.add_criterion("fails: fraction W_T < " + num_label(settings.below_factor) + " W0 increasing in T", min_step,
                        ">", 0.0);
    r.add_criterion("fails: fraction W_T < " + num_label(settings.below_factor) + " W0 at T=" + num_label(lf.t),
                    fraction_below(lf), ">=", settings.below_fraction);

    const auto sw = survivor_W(lh);
    std::size_t above = 0;
    for (double w : sw)
        above += w > settings.survivor_factor * W0 ? 1 : 0;
    const double p_above = sw.empty() ? 0.0 : static_cast<double>(above) / static_cast<double>(sw.size());
    r.add_criterion("holds: P(W_T > " + num_label(settings.survivor_factor) + " W0 | survival) at T=" +
                        num_label(lh.t),
                    p_above, ">", 0.5);
    const double med = quantile(sw, 0.5);
    if (settings.survivor_median_floor)
        r.add_criterion("holds: survivor median W_T at T=" + num_label(lh.t) + " vs pilot floor", med, ">=",
                        *settings.survivor_median_floor);
    else
        r.info.emplace_back("survivor_median_floor", "not configured");
    r.comparisons = 2 * times.size();
    r.runtime_seconds = seconds_since(start);
    return r;
}

ExperimentReport spine_experiment(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                                  const SimConfig& config, const SpineSettings& settings, double flow_dt,
                                  std::size_t workers)
{
    const auto start = Clock::now();
    ExperimentReport r;
    r.experiment = "spine";
    r.seed = config.seed;
    r.n_paths = settings.paths;
    const TypedVector& f = settings.f;
    const double t = settings.t;

    const double analytic = tilted_laplace(mech, spectral, x0, f, t, flow_dt);
    r.add_stat("analytic", t, "tilted_laplace", analytic);
    const Estimate weighted = weighted_tilt_estimate(mech, spectral, x0, f, t, settings.paths, config, workers);
    r.add_stat("weighted", t, "laplace", weighted.mean, weighted.se);
    r.add_criterion("analytic vs weighted", z_score(weighted.mean - analytic, weighted.se), "<=", kSeMultiplier);

    std::vector<double> discrepancy;
    for (double delta : settings.deltas)
    {
        const std::string tag = "delta=" + num_label(delta);
        const GammaEstimates g = gamma_laplace_estimate(mech, spectral, x0, f, t, settings.paths,
                                                        settings.conditional_paths, config, delta, workers);
        const double biased = tilted_laplace(mech, spectral, x0, f, t, flow_dt, delta);
        r.add_stat("gamma " + tag, t, "simulated_laplace", g.simulated.mean, g.simulated.se);
        r.add_stat("gamma " + tag, t, "conditional_laplace", g.conditional.mean, g.conditional.se);
        r.add_stat("gamma " + tag, t, "mean_Z", g.Z.mean, g.Z.se);
        r.add_stat("gamma " + tag, t, "delta_oracle", biased);
        r.add_stat("gamma " + tag, t, "immigrants_per_record",
                   static_cast<double>(g.immigrants) /
                       static_cast<double>(std::max(settings.paths, settings.conditional_paths)));
        r.add_criterion("analytic vs gamma " + tag, z_score(g.simulated.mean - analytic, g.simulated.se), "<=",
                        kSeMultiplier);
        r.add_criterion("weighted vs gamma " + tag,
                        z_score(g.simulated.mean - weighted.mean, std::hypot(g.simulated.se, weighted.se)), "<=",
                        kSeMultiplier);
        r.add_criterion("delta oracle vs conditional gamma " + tag,
                        z_score(g.conditional.mean - biased, g.conditional.se), "<=", kSeMultiplier);
        discrepancy.push_back(std::abs(g.conditional.mean - analytic));
        r.add_stat("gamma " + tag, t, "conditional_discrepancy", discrepancy.back(), g.conditional.se);
    }
    if (discrepancy.size() > 1)
    {
        // deltas are listed from coarse to fine
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < discrepancy.size(); ++k)
            worst = std::max(worst, discrepancy[k] - discrepancy[k - 1]);
        r.add_criterion("gamma discrepancy decreasing as delta shrinks", worst, "<", 0.0);
    }
    r.comparisons = 1 + 3 * settings.deltas.size();
    r.runtime_seconds = seconds_since(start);
    return r;
}
}  // namespace mcsbp
