// mcsbp: command-line front end for the experiment harness.
#include "mcsbp/harness.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace mcsbp;

namespace
{
struct Shared
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::optional<std::size_t> paths;
    std::string format = "json";
};

void add_shared(CLI::App* sub, Shared& s)
{
    sub->add_option("--config", s.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", s.seed, "override simulation.seed");
    sub->add_option("--out-dir", s.out_dir, "directory for reports")->capture_default_str();
    sub->add_option("--paths", s.paths, "override the path count");
    sub->add_option("--format", s.format, "report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

TypedVector parse_list(const std::vector<double>& v)
{
    return Eigen::Map<const TypedVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

BranchingMechanism require_mechanism(const ExperimentConfig& cfg)
{
    if (!cfg.mechanism)
        throw ModelError("config has no 'mechanism' section");
    return BranchingMechanism(*cfg.mechanism);
}

int finish(ExperimentReport report, const ExperimentConfig& cfg, const Shared& s, bool print_json = false)
{
    report.fingerprint = cfg.fingerprint;
    report.info.emplace_back("config", cfg.name);
    const auto files = emit_report(report, s.format == "csv" ? ReportFormat::csv : ReportFormat::json, s.out_dir);
    if (print_json)
    {
        nlohmann::json j = report_to_json(report);
        j.erase("stats");
        std::cout << j.dump(2) << "\n";
    }
    else
    {
        for (const auto& c : report.criteria)
            std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  [" << c.value << " " << c.relation << " "
                      << c.threshold << "]" << (c.detail.empty() ? "" : "  " + c.detail) << "\n";
    }
    for (const auto& f : files)
        std::cerr << "wrote " << f << "\n";
    return report.passed() ? 0 : 1;
}

void dump_paths(const BranchingMechanism& mech, const SpectralData& spectral, const TypedVector& x0,
                SimConfig cfg, std::size_t n, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw ModelError("cannot write " + path);
    out << "path_id,t";
    for (Eigen::Index i = 0; i < mech.dimension(); ++i)
        out << ",X_" << i + 1;
    out << ",W\n";
    out.precision(17);
    cfg.record_events = false;
    for (std::size_t k = 0; k < n; ++k)
    {
        Philox rng(cfg.seed, k);
        const PathResult p = simulate_path(mech, spectral, x0, cfg, rng);
        for (std::size_t g = 0; g < p.t_grid.size(); ++g)
        {
            out << k << "," << p.t_grid[g];
            for (Eigen::Index i = 0; i < mech.dimension(); ++i)
                out << "," << p.X[g](i);
            out << "," << p.W[g] << "\n";
        }
    }
}
}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-type continuous-state branching processes: oracles, simulation, spine checks"};
    app.require_subcommand(1);
    Shared shared;

    auto* validate_cmd = app.add_subcommand("validate", "check mechanism invariants; prints the report as JSON");
    add_shared(validate_cmd, shared);

    auto* spectral_cmd = app.add_subcommand("spectral", "Perron-Frobenius data, class and decay fit as JSON");
    add_shared(spectral_cmd, shared);
    double t_max = 8.0;
    spectral_cmd->add_option("--t-max", t_max, "largest time of the decay grid (step 0.25)")->capture_default_str();

    auto* laplace_cmd = app.add_subcommand("laplace", "solve v and theta on a grid");
    add_shared(laplace_cmd, shared);
    std::vector<double> lap_f, lap_x;
    std::optional<double> lap_t, lap_dt;
    laplace_cmd->add_option("--f", lap_f, "test function");
    laplace_cmd->add_option("--x", lap_x, "initial state");
    laplace_cmd->add_option("--t", lap_t, "time");
    laplace_cmd->add_option("--dt", lap_dt, "RK4 step");

    auto* simulate_cmd = app.add_subcommand("simulate", "ensemble with Laplace, mean-matrix and martingale checks");
    add_shared(simulate_cmd, shared);
    std::string paths_csv;
    std::size_t dump_count = 10;
    simulate_cmd->add_option("--paths-csv", paths_csv, "write path_id,t,X_1..X_d,W for the first --dump-paths paths");
    simulate_cmd->add_option("--dump-paths", dump_count, "paths written to --paths-csv")->capture_default_str();

    auto* slln_cmd = app.add_subcommand("slln", "direction-error trend of X_T / <1, X_T>");
    add_shared(slln_cmd, shared);

    auto* xlogx_cmd = app.add_subcommand("xlogx", "x log x dichotomy on a pair of mechanisms");
    add_shared(xlogx_cmd, shared);

    auto* spine_cmd = app.add_subcommand("spine", "analytic / weighted / Gamma consistency triangle");
    add_shared(spine_cmd, shared);
    std::vector<double> sp_x0, sp_f, sp_deltas;
    std::optional<double> sp_t;
    spine_cmd->add_option("--x0", sp_x0, "initial state");
    spine_cmd->add_option("--f", sp_f, "test function");
    spine_cmd->add_option("--t", sp_t, "time");
    spine_cmd->add_option("--delta", sp_deltas, "excursion knobs, coarse to fine");

    CLI11_PARSE(app, argc, argv);

    try
    {
        ExperimentConfig cfg = load_config(shared.config);
        if (shared.seed)
            cfg.sim.seed = *shared.seed;
        if (shared.paths)
        {
            cfg.paths = *shared.paths;
            cfg.spine.paths = *shared.paths;
        }

        if (validate_cmd->parsed())
        {
            if (!cfg.mechanism)
                throw ModelError("config has no 'mechanism' section");
            return finish(validate_experiment(*cfg.mechanism), cfg, shared, true);
        }
        if (spectral_cmd->parsed())
        {
            const BranchingMechanism mech = require_mechanism(cfg);
            std::vector<double> grid;
            for (double t = 0.25; t <= t_max + 1e-12; t += 0.25)
                grid.push_back(t);
            return finish(spectral_experiment(mech.B(), grid), cfg, shared, true);
        }
        if (laplace_cmd->parsed())
        {
            const BranchingMechanism mech = require_mechanism(cfg);
            const TypedVector f = !lap_f.empty() ? parse_list(lap_f)
                                  : cfg.f.empty() ? TypedVector::Ones(mech.dimension())
                                                  : cfg.f.front();
            const TypedVector x = lap_x.empty() ? cfg.x0 : parse_list(lap_x);
            auto report = laplace_experiment(mech, x, f, lap_t.value_or(cfg.t), lap_dt.value_or(cfg.flow_dt));
            return finish(std::move(report), cfg, shared);
        }
        if (simulate_cmd->parsed())
        {
            const BranchingMechanism mech = require_mechanism(cfg);
            const SpectralData spectral = perron(mech.B());
            if (!paths_csv.empty())
                dump_paths(mech, spectral, cfg.x0, cfg.sim, std::min(dump_count, cfg.paths), paths_csv);
            auto report = ensemble_experiment(mech, spectral, cfg.x0, cfg.sim, cfg.paths, cfg.T_list, cfg.f,
                                              cfg.martingale_T, cfg.flow_dt);
            return finish(std::move(report), cfg, shared);
        }
        if (slln_cmd->parsed())
        {
            const BranchingMechanism mech = require_mechanism(cfg);
            const SpectralData spectral = perron(mech.B());
            return finish(slln_experiment(mech, spectral, cfg.x0, cfg.sim, cfg.paths, cfg.slln), cfg, shared);
        }
        if (xlogx_cmd->parsed())
        {
            if (!cfg.xlogx)
                throw ModelError("config has no 'xlogx' section");
            const BranchingMechanism holds(cfg.xlogx->holds), fails(cfg.xlogx->fails);
            return finish(xlogx_experiment(holds, fails, cfg.x0, cfg.sim, cfg.paths, *cfg.xlogx), cfg, shared);
        }
        if (spine_cmd->parsed())
        {
            const BranchingMechanism mech = require_mechanism(cfg);
            const SpectralData spectral = perron(mech.B());
            SpineSettings s = cfg.spine;
            if (!sp_f.empty())
                s.f = parse_list(sp_f);
            if (sp_t)
                s.t = *sp_t;
            if (!sp_deltas.empty())
                s.deltas = sp_deltas;
            const TypedVector x0 = sp_x0.empty() ? cfg.x0 : parse_list(sp_x0);
            return finish(spine_experiment(mech, spectral, x0, cfg.sim, s, cfg.flow_dt), cfg, shared);
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << "mcsbp: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
