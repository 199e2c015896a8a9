#pragma once

// Command-line front end: configuration parsing and the five pipelines
// (simulate-mc, solve-fp, steady-state, fit-pareto, validate).
//
// Options come from flags and, optionally, from an INI file given with
// --config before the subcommand. The file has one [section] per
// subcommand holding keys named like the long flags without dashes:
//
//     [steady-state]
//     chi = 0.2
//     grid-points = 4000
//
// Flags win over the file; unknown keys are rejected. Requires CLI11 and
// nlohmann/json.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "yardsale/analysis.hpp"
#include "yardsale/domain.hpp"
#include "yardsale/errors.hpp"
#include "yardsale/fokker_planck.hpp"
#include "yardsale/io.hpp"
#include "yardsale/monte_carlo.hpp"
#include "yardsale/steady_state.hpp"

namespace yardsale::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "YARDSALE_OUTPUT_ROOT";
inline constexpr const char* kDefaultOutputRoot = "yardsale-output";

/// Malformed or inconsistent command line; the message names the key.
class UsageError : public Error {
public:
    using Error::Error;
};

/// --help or --version was given; text holds what to print.
struct HelpRequested {
    std::string text;
};

enum ExitCode : int {
    exit_ok = 0,
    exit_check_failed = 1,
    exit_usage = 2,
    exit_argument = 3,
    exit_degenerate_density = 4,
    exit_undefined_metric = 5,
    exit_instability = 6,
    exit_no_steady_state = 7,
    exit_fit = 8,
    exit_estimator = 9,
    exit_conservation = 10,
    exit_io = 11,
    exit_not_converged = 12,
    exit_internal = 70,
};

struct RunConfig {
    std::string subcommand;
    ModelParams params;
    double grid_lo = 1e-4;
    double grid_hi = 1e3;
    std::size_t grid_points = 2000;
    std::uint64_t seed = 0;
    std::string output_dir;
    io::Format format = io::Format::csv;
    std::string config_file;

    // simulate-mc
    std::size_t steps = 20000;
    std::size_t record_every = 1000;
    std::size_t replicas = 1;
    std::size_t threads = 0; // 0: one per replica up to the hardware count
    bool snapshots = true;

    // solve-fp
    double t_end = 5.0;
    double record_interval = 0.5;
    double cfl = 0.9;
    double ic_sigma = 0.1;
    double w_drift_abort = 1e-3;
    double steady_tol = 0.0;

    // steady-state
    double tol = 1e-8;
    std::size_t max_iter = 500;
    double damping = 0.5;

    // steady-state, fit-pareto
    double fit_lo = 0.0; // 0: default window
    double fit_hi = 0.0;
    std::string input;
    std::size_t hill_k = 0; // 0: all sample values above the window start

    // validate
    double check_time = 10.0;
    double fp_grid_lo = 1e-2;
    std::size_t fp_grid_points = 600;

    WealthGrid grid() const { return make_log_grid(grid_lo, grid_hi, grid_points); }
};

namespace detail {

inline void usage_check(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw UsageError("--" + key + ": " + message);
}

inline void add_common(CLI::App* sub, RunConfig& c) {
    sub->add_option("--beta", c.params.beta, "Stake fraction beta, in (0, 1)")->capture_default_str();
    sub->add_option("--chi", c.params.chi, "Tax rate per transaction time, chi = tau / beta^2")->capture_default_str();
    sub->add_option("--agents", c.params.n_agents, "Number of agents N")->capture_default_str();
    sub->add_option("--mean-wealth", c.params.mean_wealth, "Mean wealth W/N")->capture_default_str();
    sub->add_option("--grid-lo", c.grid_lo, "Lowest grid node")->capture_default_str();
    sub->add_option("--grid-hi", c.grid_hi, "Highest grid node")->capture_default_str();
    sub->add_option("--grid-points", c.grid_points, "Number of geometrically spaced grid nodes")
        ->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_option("--output", c.output_dir, "Output directory (default: $" + std::string(kOutputRootEnv) +
                                                  "/<subcommand>)");
    sub->add_option("--format", c.format, "Table format: csv or json")
        ->transform(CLI::CheckedTransformer(std::map<std::string, io::Format>{{"csv", io::Format::csv},
                                                                              {"json", io::Format::json}}))
        ->option_text("csv|json [csv]");
}

inline void validate_common(const RunConfig& c) {
    usage_check(c.params.beta > 0.0 && c.params.beta < 1.0, "beta", "must lie in (0, 1)");
    usage_check(std::isfinite(c.params.chi) && c.params.chi >= 0.0, "chi", "must be >= 0");
    usage_check(c.params.n_agents >= 2, "agents", "must be >= 2");
    usage_check(std::isfinite(c.params.mean_wealth) && c.params.mean_wealth > 0.0, "mean-wealth", "must be > 0");
    usage_check(std::isfinite(c.grid_lo) && c.grid_lo > 0.0, "grid-lo", "must be > 0");
    usage_check(std::isfinite(c.grid_hi) && c.grid_hi > c.grid_lo, "grid-hi", "must exceed --grid-lo");
    usage_check(c.grid_points >= 3, "grid-points", "must be >= 3");
}

inline void validate_fit_window(const RunConfig& c) {
    usage_check(c.fit_lo >= 0.0, "fit-lo", "must be >= 0");
    usage_check(c.fit_hi >= 0.0, "fit-hi", "must be >= 0");
    usage_check((c.fit_lo == 0.0) == (c.fit_hi == 0.0), "fit-lo", "--fit-lo and --fit-hi must be given together");
    usage_check(c.fit_lo == 0.0 || c.fit_hi > c.fit_lo, "fit-hi", "must exceed --fit-lo");
}

inline void validate_subcommand(const RunConfig& c) {
    validate_common(c);
    const std::string& s = c.subcommand;
    if (s == "simulate-mc") {
        usage_check(c.steps >= 1, "steps", "must be >= 1");
        usage_check(c.record_every >= 1, "record-every", "must be >= 1");
        usage_check(c.replicas >= 1, "replicas", "must be >= 1");
        usage_check(c.params.tau() <= 1.0, "chi", "chi * beta^2 must not exceed 1");
    } else if (s == "solve-fp") {
        usage_check(std::isfinite(c.t_end) && c.t_end >= 0.0, "t-end", "must be >= 0");
        usage_check(c.record_interval > 0.0, "record-every", "must be > 0");
        usage_check(c.cfl > 0.0 && c.cfl <= 1.0, "cfl", "must lie in (0, 1]");
        usage_check(c.ic_sigma > 0.0, "ic-sigma", "must be > 0");
        usage_check(c.steady_tol >= 0.0, "steady-tol", "must be >= 0");
    } else if (s == "steady-state") {
        usage_check(c.params.chi > 0.0, "chi",
                    "steady-state requires chi > 0; no stationary density exists at chi = 0 (wealth condenses)");
        usage_check(c.tol > 0.0, "tol", "must be > 0");
        usage_check(c.max_iter >= 1, "max-iter", "must be >= 1");
        usage_check(c.damping > 0.0 && c.damping <= 1.0, "damping", "must lie in (0, 1]");
        validate_fit_window(c);
    } else if (s == "fit-pareto") {
        usage_check(!c.input.empty(), "input", "is required");
        validate_fit_window(c);
        usage_check(c.hill_k != 1, "hill-k", "must be >= 2");
    } else if (s == "validate") {
        usage_check(c.params.chi > 0.0, "chi", "validate needs chi > 0 for the stationary checks");
        usage_check(c.check_time > 0.0, "check-time", "must be > 0");
        usage_check(c.replicas >= 1, "replicas", "must be >= 1");
        usage_check(c.fp_grid_lo > 0.0 && c.fp_grid_lo < c.grid_hi, "fp-grid-lo", "must lie in (0, --grid-hi)");
        usage_check(c.fp_grid_points >= 3, "fp-grid-points", "must be >= 3");
        usage_check(c.params.tau() <= 1.0, "chi", "chi * beta^2 must not exceed 1");
    }
}

}  // namespace detail

/// Parse a command line (without the program name). The default output
/// directory is <output_root>/<subcommand>; output_root defaults to the
/// environment variable YARDSALE_OUTPUT_ROOT, else "yardsale-output".
inline RunConfig parse_config(const std::vector<std::string>& args, std::string output_root = {}) {
    if (output_root.empty()) {
        const char* env = std::getenv(kOutputRootEnv);
        output_root = env && *env ? env : kDefaultOutputRoot;
    }

    CLI::App app{"Yard-Sale wealth exchange: agent simulation, Fokker-Planck solvers and tail analysis", "yardsale"};
    app.set_version_flag("--version", std::string(kVersion));
    app.set_config("--config", "", "INI file with one [section] per subcommand");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);

    const std::vector<std::pair<std::string, std::string>> names = {
        {"simulate-mc", "Run the agent-based Monte Carlo simulation"},
        {"solve-fp", "Integrate the time-dependent Fokker-Planck equation"},
        {"steady-state", "Solve for the stationary density and fit its tail"},
        {"fit-pareto", "Estimate the Pareto index of a sample or density CSV"},
        {"validate", "Run the Monte Carlo, stationary and asymptotic cross-checks"},
    };
    std::map<std::string, RunConfig> configs;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : names) {
        RunConfig& c = configs[name];
        c.subcommand = name;
        if (name == "validate") c.replicas = 8;
        CLI::App* sub = app.add_subcommand(name, help);
        detail::add_common(sub, c);
        if (name == "simulate-mc") {
            sub->add_option("--steps", c.steps, "Transaction times to simulate")->capture_default_str();
            sub->add_option("--record-every", c.record_every, "Steps between records")->capture_default_str();
            sub->add_option("--replicas", c.replicas, "Independent replicas, seeded from (seed, replica)")
                ->capture_default_str();
            sub->add_option("--threads", c.threads, "Worker threads (0: automatic)")->capture_default_str();
            sub->add_flag("--snapshots,!--no-snapshots", c.snapshots, "Write per-agent snapshots")
                ->capture_default_str();
        } else if (name == "solve-fp") {
            sub->add_option("--t-end", c.t_end, "Final time (transaction-time units)")->capture_default_str();
            sub->add_option("--record-every", c.record_interval, "Time between records")->capture_default_str();
            sub->add_option("--cfl", c.cfl, "Safety factor on the stable time step")->capture_default_str();
            sub->add_option("--ic-sigma", c.ic_sigma, "Log-width of the initial log-normal")->capture_default_str();
            sub->add_option("--w-drift-abort", c.w_drift_abort, "Abort when |W/W0 - 1| exceeds this (<= 0: never)")
                ->capture_default_str();
            sub->add_option("--steady-tol", c.steady_tol, "Stop when the L1 change per record is below this * N")
                ->capture_default_str();
        } else if (name == "steady-state") {
            sub->add_option("--tol", c.tol, "Convergence tolerance")->capture_default_str();
            sub->add_option("--max-iter", c.max_iter, "Iteration limit")->capture_default_str();
            sub->add_option("--damping", c.damping, "Mixing weight of the new iterate")->capture_default_str();
            sub->add_option("--fit-lo", c.fit_lo, "Tail fit window start (default: mode of w P)");
            sub->add_option("--fit-hi", c.fit_hi, "Tail fit window end (default: where A = 10/N)");
        } else if (name == "fit-pareto") {
            sub->add_option("--input", c.input, "CSV with a wealth column (sample) or w and P columns (density)");
            sub->add_option("--fit-lo", c.fit_lo, "Tail fit window start");
            sub->add_option("--fit-hi", c.fit_hi, "Tail fit window end");
            sub->add_option("--hill-k", c.hill_k, "Order statistics used by the Hill estimator");
        } else {
            sub->add_option("--check-time", c.check_time, "Horizon of the Monte Carlo versus Fokker-Planck check")
                ->capture_default_str();
            sub->add_option("--replicas", c.replicas, "Pooled Monte Carlo replicas")->capture_default_str();
            sub->add_option("--threads", c.threads, "Worker threads (0: automatic)")->capture_default_str();
            sub->add_option("--fp-grid-lo", c.fp_grid_lo, "Lowest node of the time-dependent solver's grid")
                ->capture_default_str();
            sub->add_option("--fp-grid-points", c.fp_grid_points, "Nodes of the time-dependent solver's grid")
                ->capture_default_str();
        }
        subs[name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested{app.help()};
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
    } catch (const CLI::CallForVersion&) {
        throw HelpRequested{std::string(kVersion) + "\n"};
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    const std::string chosen = app.get_subcommands().front()->get_name();
    RunConfig cfg = configs.at(chosen);
    if (auto* opt = app.get_config_ptr(); opt && opt->count() > 0) cfg.config_file = opt->as<std::string>();
    if (cfg.output_dir.empty()) cfg.output_dir = (std::filesystem::path(output_root) / chosen).string();
    detail::validate_subcommand(cfg);
    return cfg;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["subcommand"] = c.subcommand;
    j["beta"] = c.params.beta;
    j["chi"] = c.params.chi;
    j["tau"] = c.params.tau();
    j["agents"] = c.params.n_agents;
    j["mean_wealth"] = c.params.mean_wealth;
    j["grid"] = {{"lo", c.grid_lo}, {"hi", c.grid_hi}, {"points", c.grid_points}, {"spacing", "geometric"}};
    j["seed"] = c.seed;
    j["output"] = c.output_dir;
    j["format"] = c.format == io::Format::csv ? "csv" : "json";
    j["config_file"] = c.config_file.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(c.config_file);
    const std::string& s = c.subcommand;
    if (s == "simulate-mc") {
        j["steps"] = c.steps;
        j["record_every"] = c.record_every;
        j["replicas"] = c.replicas;
        j["snapshots"] = c.snapshots;
        j["pairing"] = "random_matching";
        j["initial_condition"] = "equal";
    } else if (s == "solve-fp") {
        j["t_end"] = c.t_end;
        j["record_every"] = c.record_interval;
        j["cfl"] = c.cfl;
        j["ic_sigma"] = c.ic_sigma;
        j["w_drift_abort"] = c.w_drift_abort;
        j["steady_tol"] = c.steady_tol;
        j["initial_condition"] = "lognormal";
    } else if (s == "steady-state") {
        j["tol"] = c.tol;
        j["max_iter"] = c.max_iter;
        j["damping"] = c.damping;
        j["fit_window"] = {c.fit_lo, c.fit_hi};
    } else if (s == "fit-pareto") {
        j["input"] = c.input;
        j["fit_window"] = {c.fit_lo, c.fit_hi};
        j["hill_k"] = c.hill_k;
    } else if (s == "validate") {
        j["check_time"] = c.check_time;
        j["replicas"] = c.replicas;
        j["fp_grid"] = {{"lo", c.fp_grid_lo}, {"hi", c.grid_hi}, {"points", c.fp_grid_points}};
    }
    return j;
}

/// Map an exception escaping a pipeline to its exit code.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return exit_usage;
    if (dynamic_cast<const io::IoError*>(&e)) return exit_io;
    if (dynamic_cast<const DegenerateDensityError*>(&e)) return exit_degenerate_density;
    if (dynamic_cast<const UndefinedMetricError*>(&e)) return exit_undefined_metric;
    if (dynamic_cast<const InstabilityError*>(&e)) return exit_instability;
    if (dynamic_cast<const NoSteadyStateError*>(&e)) return exit_no_steady_state;
    if (dynamic_cast<const FitError*>(&e)) return exit_fit;
    if (dynamic_cast<const EstimatorError*>(&e)) return exit_estimator;
    if (dynamic_cast<const ConservationError*>(&e)) return exit_conservation;
    if (dynamic_cast<const ArgumentError*>(&e)) return exit_argument;
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return exit_io;
    return exit_internal;
}

struct PipelineResult {
    int exit_code = exit_ok;
    std::vector<std::string> outputs; // file names relative to the output directory
    nlohmann::ordered_json results = nlohmann::ordered_json::object();
};

namespace detail {

struct Context {
    const RunConfig& cfg;
    std::filesystem::path dir;
    std::ostream& log;
    PipelineResult& result;

    std::string path(const std::string& name) {
        result.outputs.push_back(name);
        return (dir / name).string();
    }
};

/// Run fn(i) for i in [0, count) on up to `threads` workers; rethrows the
/// first failure by index.
template <typename F>
void parallel_for(std::size_t count, std::size_t threads, F&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline McConfig mc_config(const RunConfig& c, std::size_t steps, std::size_t record_every, std::uint64_t replica,
                          bool snapshots) {
    McConfig mc;
    mc.params = c.params;
    mc.steps = steps;
    mc.record_every = record_every;
    mc.rng_seed = c.seed;
    mc.replica = replica;
    mc.keep_snapshots = snapshots;
    return mc;
}

inline void write_mc_run(Context& ctx, const McRun& run, const std::string& prefix) {
    const io::Format fmt = ctx.cfg.format;
    if (ctx.cfg.snapshots) {
        io::TableWriter snap(ctx.path(io::table_name(prefix + "snapshots", fmt)), {"step", "agent_id", "wealth"}, fmt);
        for (const auto& rec : run.records)
            if (rec.snapshot)
                for (std::size_t a = 0; a < rec.snapshot->size(); ++a)
                    snap.row({static_cast<double>(rec.step), static_cast<double>(a), (*rec.snapshot)[a]});
        snap.close();
    }
    io::TableWriter summary(ctx.path(io::table_name(prefix + "summary", fmt)), {"step", "gini", "mean", "m2"}, fmt);
    for (const auto& rec : run.records)
        summary.row({static_cast<double>(rec.step), rec.gini, rec.mean, rec.second_moment});
    summary.close();
}

inline void simulate_mc(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    std::vector<McRun> runs(c.replicas);
    parallel_for(c.replicas, c.threads, [&](std::size_t r) {
        const McConfig mc = mc_config(c, c.steps, c.record_every, r, c.snapshots);
        runs[r] = run(mc, make_equal_population(c.params.n_agents, c.params.mean_wealth));
    });

    if (c.replicas == 1) {
        write_mc_run(ctx, runs[0], "");
    } else {
        for (std::size_t r = 0; r < c.replicas; ++r) {
            std::ostringstream name;
            name << "replica-" << std::setw(3) << std::setfill('0') << r;
            std::filesystem::create_directories(ctx.dir / name.str());
            write_mc_run(ctx, runs[r], name.str() + "/");
        }
        io::TableWriter ens(ctx.path(io::table_name("ensemble", c.format)),
                            {"step", "gini_mean", "gini_stderr", "mean", "m2"}, c.format);
        const double n = static_cast<double>(c.replicas);
        for (std::size_t k = 0; k < runs[0].records.size(); ++k) {
            double g = 0.0, g2 = 0.0, mean = 0.0, m2 = 0.0;
            for (const auto& run : runs) {
                g += run.records[k].gini;
                g2 += run.records[k].gini * run.records[k].gini;
                mean += run.records[k].mean;
                m2 += run.records[k].second_moment;
            }
            g /= n;
            const double var = std::max(0.0, g2 / n - g * g) * n / (n - 1.0);
            ens.row({static_cast<double>(runs[0].records[k].step), g, std::sqrt(var / n), mean / n, m2 / n});
        }
        ens.close();
    }

    nlohmann::ordered_json finals = nlohmann::ordered_json::array();
    for (const auto& run : runs) {
        const auto& last = run.records.back();
        finals.push_back({{"gini", last.gini}, {"mean", last.mean}, {"m2", last.second_moment}});
    }
    ctx.result.results["final"] = finals;
    ctx.log << "simulate-mc: " << c.replicas << " replica(s), " << c.steps << " steps, final Gini "
            << runs[0].records.back().gini << '\n';
}

inline void solve_fp(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    FpConfig fp;
    fp.params = c.params;
    fp.grid = c.grid();
    fp.cfl_safety = c.cfl;
    fp.t_end = c.t_end;
    fp.record_every = c.record_interval;
    fp.w_drift_abort = c.w_drift_abort;
    fp.steady_tol = c.steady_tol;
    fp.keep_densities = false;
    const DensityField p0 = lognormal_density(fp.grid, c.params.mean_wealth, c.ic_sigma);

    io::TableWriter density(ctx.path(io::table_name("density", c.format)), {"time", "w", "P"}, c.format);
    io::TableWriter log(ctx.path(io::table_name("moments", c.format)),
                        {"time", "N", "W", "boundary_flux_lo", "boundary_flux_hi"}, c.format);
    const auto w = fp.grid.nodes();
    const FpEvolution ev = evolve(fp, p0, [&](const FpRecord& rec, const FpState& state) {
        for (std::size_t i = 0; i < w.size(); ++i) density.row({rec.time, w[i], state.density[i]});
        log.row({rec.time, rec.n_total, rec.w_total, rec.boundary_flux_lo, rec.boundary_flux_hi});
    });
    density.close();
    log.close();

    const MomentSet& m = ev.final_state.moments;
    ctx.result.results = {{"final_time", ev.final_state.time},
                          {"steps", ev.steps},
                          {"reached_steady", ev.reached_steady},
                          {"relative_n_drift", m.n_total / ev.records.front().n_total - 1.0},
                          {"max_relative_w_drift", ev.max_relative_w_drift}};
    ctx.log << "solve-fp: t = " << ev.final_state.time << " after " << ev.steps << " steps, max |dW/W| "
            << ev.max_relative_w_drift << '\n';
}

inline FitWindow fit_window_or_default(const RunConfig& c, const DensityField& p, double n_agents) {
    if (c.fit_lo > 0.0) return {c.fit_lo, c.fit_hi};
    return default_fit_window(p, n_agents);
}

inline void steady_state(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const WealthGrid grid = c.grid();
    const SteadyStateResult ss = solve_steady(c.params, grid, {c.tol, c.max_iter, c.damping});
    const MomentSet m = moments(ss.density);
    const StationarityResidual res = residual_sss(ss.density, c.params.chi, c.params.mean_wealth);

    io::TableWriter density(ctx.path(io::table_name("density", c.format)), {"w", "P", "A", "B", "residual"},
                            c.format);
    for (std::size_t i = 0; i < grid.size(); ++i)
        density.row({grid[i], ss.density[i], m.tail_fraction[i], m.incomplete_m2[i], res.node[i]});
    density.close();
    io::TableWriter iters(ctx.path(io::table_name("iterations", c.format)), {"iter", "l1_change", "residual_norm"},
                          c.format);
    for (const auto& it : ss.history)
        iters.row({static_cast<double>(it.iteration), it.l1_change, it.residual_norm});
    iters.close();

    ctx.result.results = {{"converged", ss.converged},
                          {"iterations", ss.iterations},
                          {"residual_norm", ss.residual_norm},
                          {"achieved_mean_wealth", ss.achieved_mean_wealth}};
    const TailCurve tail = tail_from_density(ss.density);
    const ParetoFit fit =
        fit_pareto_tail(tail.w, tail.tail, fit_window_or_default(c, ss.density, static_cast<double>(c.params.n_agents)));
    io::write_json(ctx.path("pareto_fit.json"), nlohmann::ordered_json::array({io::to_json(fit)}));
    ctx.result.results["alpha"] = fit.alpha;
    ctx.result.results["r2"] = fit.r2;
    ctx.log << "steady-state: " << (ss.converged ? "converged" : "NOT converged") << " after " << ss.iterations
            << " iterations, residual " << ss.residual_norm << ", alpha " << fit.alpha << " (R^2 " << fit.r2
            << ")\n";
    if (!ss.converged) ctx.result.exit_code = exit_not_converged;
}

inline void fit_pareto(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    const io::CsvTable table = io::read_csv_file(c.input);
    nlohmann::ordered_json fits = nlohmann::ordered_json::array();

    if (const auto col = table.column("wealth"); col >= 0) {
        // Sample input; with a step column only the last recorded step is used.
        const auto step_col = table.column("step");
        double last_step = 0.0;
        if (step_col >= 0)
            for (const auto& row : table.rows) last_step = std::max(last_step, row[step_col]);
        std::vector<double> sample;
        for (const auto& row : table.rows)
            if (step_col < 0 || row[step_col] == last_step) sample.push_back(row[col]);
        if (sample.size() < 12) throw FitError("fit-pareto: sample needs at least 12 values");
        const TailCurve tail = tail_from_sample(sample);
        const auto [min_it, max_it] = std::minmax_element(sample.begin(), sample.end());
        const double top = *max_it;
        if (!(top > 0.0)) throw FitError("fit-pareto: sample has no positive values");
        FitWindow window{c.fit_lo, c.fit_hi};
        if (c.fit_lo == 0.0)
            window = default_fit_window(sample, make_log_grid(std::max(*min_it, 1e-12 * top), top, 400));
        const ParetoFit fit = fit_pareto_tail(tail.w, tail.tail, window);
        fits.push_back(io::to_json(fit));
        std::size_t k = c.hill_k;
        if (k == 0) k = static_cast<std::size_t>(std::count_if(sample.begin(), sample.end(),
                                                               [&](double x) { return x > window.lo; }));
        k = std::min(k, sample.size() - 1);
        const HillEstimate hill = hill_estimator(sample, k);
        fits.push_back(io::to_json(hill, *std::max_element(sample.begin(), sample.end())));
        ctx.log << "fit-pareto: loglog alpha " << fit.alpha << " (R^2 " << fit.r2 << "), hill alpha " << hill.alpha
                << " (k = " << k << ")\n";
    } else if (table.column("w") >= 0 && table.column("P") >= 0) {
        const auto wc = table.column("w");
        const auto pc = table.column("P");
        const auto tc = table.column("time");
        double last_time = -std::numeric_limits<double>::infinity();
        if (tc >= 0)
            for (const auto& row : table.rows) last_time = std::max(last_time, row[tc]);
        std::vector<double> w, p;
        for (const auto& row : table.rows)
            if (tc < 0 || row[tc] == last_time) {
                w.push_back(row[wc]);
                p.push_back(row[pc]);
            }
        const DensityField density(WealthGrid(w), p);
        const TailCurve tail = tail_from_density(density);
        const ParetoFit fit =
            fit_pareto_tail(tail.w, tail.tail, fit_window_or_default(c, density, static_cast<double>(c.params.n_agents)));
        fits.push_back(io::to_json(fit));
        ctx.log << "fit-pareto: loglog alpha " << fit.alpha << " (R^2 " << fit.r2 << ")\n";
    } else {
        throw io::IoError(c.input + ": expected a 'wealth' column or 'w' and 'P' columns");
    }
    io::write_json(ctx.path("pareto_fit.json"), fits);
    ctx.result.results["fits"] = fits;
}

struct Check {
    std::string name;
    double measured;
    double threshold;
    bool passed;
};

inline void validate(Context& ctx) {
    const RunConfig& c = ctx.cfg;
    std::vector<Check> checks;

    // Monte Carlo versus Fokker-Planck at matched time t = steps * beta^2.
    const auto steps = static_cast<std::size_t>(std::llround(c.check_time / (c.params.beta * c.params.beta)));
    std::vector<std::vector<double>> finals(c.replicas);
    parallel_for(c.replicas, c.threads, [&](std::size_t r) {
        const McConfig mc = mc_config(c, std::max<std::size_t>(steps, 1), std::max<std::size_t>(steps, 1), r, false);
        finals[r] = run(mc, make_equal_population(c.params.n_agents, c.params.mean_wealth)).final_state.wealths;
    });
    std::vector<double> pooled;
    for (const auto& f : finals) pooled.insert(pooled.end(), f.begin(), f.end());
    FpConfig fp;
    fp.params = c.params;
    fp.grid = make_log_grid(c.fp_grid_lo, c.grid_hi, c.fp_grid_points);
    fp.t_end = static_cast<double>(std::max<std::size_t>(steps, 1)) * c.params.beta * c.params.beta;
    fp.record_every = fp.t_end;
    fp.keep_densities = false;
    const FpEvolution ev = evolve(fp, lognormal_density(fp.grid, c.params.mean_wealth));
    const double l1 = binned_l1_distance(pooled, ev.final_state.density, c.fp_grid_lo, c.grid_hi, 40);
    checks.push_back({"mc_fp_l1_over_N", l1, 0.05, l1 <= 0.05});

    const WealthGrid grid = c.grid();
    const SteadyStateResult ss = solve_steady(c.params, grid);
    checks.push_back({"steady_converged", ss.converged ? 1.0 : 0.0, 1.0, ss.converged});
    checks.push_back({"steady_residual_norm", ss.residual_norm, 1e-5, ss.residual_norm <= 1e-5});
    const AsymptoteComparison asym = compare_to_asymptote(ss.density, c.params.chi, c.params.mean_wealth);
    checks.push_back({"asymptote_max_rel_error", asym.max_relative_error, 0.10, asym.max_relative_error <= 0.10});

    nlohmann::ordered_json report = nlohmann::ordered_json::array();
    bool all = true;
    ctx.log << std::left << std::setw(26) << "check" << std::setw(14) << "measured" << std::setw(12) << "threshold"
            << "result\n";
    for (const auto& ch : checks) {
        ctx.log << std::left << std::setw(26) << ch.name << std::setw(14) << io::format_double(ch.measured).substr(0, 12)
                << std::setw(12) << io::format_double(ch.threshold) << (ch.passed ? "PASS" : "FAIL") << '\n';
        report.push_back({{"check", ch.name}, {"measured", ch.measured}, {"threshold", ch.threshold}, {"passed", ch.passed}});
        all = all && ch.passed;
    }
    io::write_json(ctx.path("validation.json"), report);
    ctx.result.results["checks"] = report;
    if (!all) ctx.result.exit_code = exit_check_failed;
}

}  // namespace detail

/// Execute the selected pipeline, writing its files and manifest.json into
/// cfg.output_dir. Errors are reported on `log`, recorded in the manifest
/// (status "incomplete") and mapped to distinct exit codes.
inline int run_pipeline(const RunConfig& cfg, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    PipelineResult result;
    std::string error;
    std::filesystem::path dir(cfg.output_dir);
    try {
        std::filesystem::create_directories(dir);
    } catch (const std::exception& e) {
        log << "error: cannot create output directory " << cfg.output_dir << ": " << e.what() << '\n';
        return exit_io;
    }

    detail::Context ctx{cfg, dir, log, result};
    try {
        if (cfg.subcommand == "simulate-mc") detail::simulate_mc(ctx);
        else if (cfg.subcommand == "solve-fp") detail::solve_fp(ctx);
        else if (cfg.subcommand == "steady-state") detail::steady_state(ctx);
        else if (cfg.subcommand == "fit-pareto") detail::fit_pareto(ctx);
        else if (cfg.subcommand == "validate") detail::validate(ctx);
        else throw UsageError("unknown subcommand " + cfg.subcommand);
    } catch (const std::exception& e) {
        error = e.what();
        result.exit_code = exit_code_for(e);
        log << "error: " << error << '\n';
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    nlohmann::ordered_json manifest;
    manifest["tool"] = "yardsale";
    manifest["version"] = kVersion;
    manifest["subcommand"] = cfg.subcommand;
    manifest["status"] = error.empty() && result.exit_code != exit_not_converged ? "complete" : "incomplete";
    manifest["exit_code"] = result.exit_code;
    manifest["error"] = error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(error);
    manifest["seed"] = cfg.seed;
    manifest["wall_time_seconds"] = wall;
    manifest["config"] = to_json(cfg);
    manifest["outputs"] = result.outputs;
    manifest["results"] = result.results;
    try {
        io::write_json((dir / "manifest.json").string(), manifest);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return exit_io;
    }
    return result.exit_code;
}

}  // namespace yardsale::cli
