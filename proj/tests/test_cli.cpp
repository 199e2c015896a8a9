#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yardsale/cli.hpp"

using namespace yardsale;
using namespace yardsale::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("yardsale-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string usage_message(const std::vector<std::string>& args) {
    try {
        parse_config(args, "unused");
    } catch (const UsageError& e) {
        return e.what();
    }
    return "";
}

int run_args(const std::vector<std::string>& args, std::ostream& log) {
    return run_pipeline(parse_config(args, "unused"), log);
}

int run_tool(const std::string& args) {
    const std::string cmd = std::string(YARDSALE_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, HappyPath) {
    const RunConfig c = parse_config(
        {"simulate-mc", "--agents", "10000", "--beta", "0.1", "--chi", "0.1", "--steps", "20000", "--seed", "42"},
        "root");
    EXPECT_EQ(c.subcommand, "simulate-mc");
    EXPECT_EQ(c.params.n_agents, 10000u);
    EXPECT_EQ(c.params.beta, 0.1);
    EXPECT_EQ(c.params.chi, 0.1);
    EXPECT_EQ(c.steps, 20000u);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(fs::path(c.output_dir), fs::path("root") / "simulate-mc");
}

TEST(ParseConfig, Defaults) {
    const RunConfig c = parse_config({"steady-state"}, "root");
    EXPECT_EQ(c.params.beta, 0.1);
    EXPECT_EQ(c.params.chi, 0.1);
    EXPECT_EQ(c.params.n_agents, 10000u);
    EXPECT_EQ(c.params.mean_wealth, 1.0);
    EXPECT_EQ(c.grid_lo, 1e-4);
    EXPECT_EQ(c.grid_hi, 1e3);
    EXPECT_EQ(c.grid_points, 2000u);
    EXPECT_EQ(c.seed, 0u);
    EXPECT_EQ(c.format, io::Format::csv);
}

TEST(ParseConfig, BetaOutsideUnitIntervalIsUsageError) {
    EXPECT_NE(usage_message({"simulate-mc", "--beta", "1.5"}).find("--beta"), std::string::npos);
    EXPECT_NE(usage_message({"simulate-mc", "--beta", "0"}).find("--beta"), std::string::npos);
}

TEST(ParseConfig, SteadyStateWithoutTaxIsUsageError) {
    const std::string msg = usage_message({"steady-state", "--chi", "0"});
    EXPECT_NE(msg.find("--chi"), std::string::npos);
    EXPECT_NE(msg.find("no stationary density"), std::string::npos);
}

TEST(ParseConfig, MalformedAndConflictingValues) {
    EXPECT_NE(usage_message({"simulate-mc", "--steps", "many"}).find("--steps"), std::string::npos);
    EXPECT_NE(usage_message({"solve-fp", "--grid-lo", "5", "--grid-hi", "1"}).find("--grid-hi"), std::string::npos);
    EXPECT_NE(usage_message({"steady-state", "--fit-lo", "1"}).find("--fit-lo"), std::string::npos);
    EXPECT_NE(usage_message({"simulate-mc", "--format", "xml"}).find("--format"), std::string::npos);
    EXPECT_FALSE(usage_message({"simulate-mc", "--bogus", "1"}).empty());
    EXPECT_FALSE(usage_message({}).empty());
    EXPECT_FALSE(usage_message({"simulate-mc", "solve-fp"}).empty());
    EXPECT_NE(usage_message({"fit-pareto"}).find("--input"), std::string::npos);
}

TEST(ParseConfig, ConfigFileSectionsAndFlagPrecedence) {
    const fs::path dir = scratch("config");
    const fs::path ini = dir / "run.ini";
    std::ofstream(ini) << "[simulate-mc]\nbeta = 0.2\nsteps = 7\n\n[solve-fp]\nbeta = 0.3\nt-end = 3\n";
    const RunConfig mc = parse_config({"--config", ini.string(), "simulate-mc", "--steps", "9"}, "root");
    EXPECT_EQ(mc.params.beta, 0.2);
    EXPECT_EQ(mc.steps, 9u);
    EXPECT_EQ(mc.config_file, ini.string());
    const RunConfig fp = parse_config({"--config", ini.string(), "solve-fp"}, "root");
    EXPECT_EQ(fp.params.beta, 0.3);
    EXPECT_EQ(fp.t_end, 3.0);
}

TEST(ParseConfig, ConfigFileUnknownKeyRejected) {
    const fs::path dir = scratch("config-bad");
    const fs::path ini = dir / "bad.ini";
    std::ofstream(ini) << "[simulate-mc]\nbogus = 1\n";
    EXPECT_NE(usage_message({"--config", ini.string(), "simulate-mc"}).find("bogus"), std::string::npos);
    std::ofstream(ini) << "[simulate-mc]\nbeta = 2\n";
    EXPECT_NE(usage_message({"--config", ini.string(), "simulate-mc"}).find("--beta"), std::string::npos);
}

TEST(ParseConfig, OutputRootFromEnvironment) {
    ::setenv(kOutputRootEnv, "/tmp/from-env", 1);
    const RunConfig c = parse_config({"validate"});
    ::unsetenv(kOutputRootEnv);
    EXPECT_EQ(fs::path(c.output_dir), fs::path("/tmp/from-env") / "validate");
    EXPECT_EQ(parse_config({"validate", "--output", "x"}, "root").output_dir, "x");
}

TEST(ParseConfig, HelpIsNotAnError) {
    EXPECT_THROW(parse_config({"--help"}, "root"), HelpRequested);
    EXPECT_THROW(parse_config({"simulate-mc", "--help"}, "root"), HelpRequested);
}

TEST(RunPipeline, SteadyStateWritesItsFiles) {
    const fs::path dir = scratch("steady");
    std::ostringstream log;
    const int code = run_args({"steady-state", "--grid-lo", "1e-2", "--grid-points", "400", "--output", dir.string()}, log);
    ASSERT_EQ(code, exit_ok) << log.str();
    for (const char* f : {"density.csv", "iterations.csv", "pareto_fit.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const std::string density = slurp(dir / "density.csv");
    EXPECT_EQ(density.substr(0, density.find('\n')), "w,P,A,B,residual");
    EXPECT_EQ(slurp(dir / "iterations.csv").substr(0, 28), "iter,l1_change,residual_norm");

    const auto fit = read_json(dir / "pareto_fit.json");
    ASSERT_TRUE(fit.is_array());
    for (const char* key : {"alpha", "w_min", "window", "r2", "stderr", "method"}) EXPECT_TRUE(fit[0].contains(key));

    const auto manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest["status"], "complete");
    EXPECT_EQ(manifest["subcommand"], "steady-state");
    EXPECT_EQ(manifest["seed"], 0);
    EXPECT_EQ(manifest["config"]["chi"], 0.1);
    EXPECT_EQ(manifest["config"]["grid"]["points"], 400);
    EXPECT_TRUE(manifest.contains("wall_time_seconds"));
    EXPECT_EQ(manifest["version"], kVersion);
    EXPECT_TRUE(manifest["results"]["converged"]);
}

TEST(RunPipeline, SimulationIsByteReproducible) {
    const std::vector<std::string> base = {"simulate-mc", "--agents", "200", "--steps", "300", "--record-every",
                                           "100", "--seed", "5"};
    const fs::path a = scratch("mc-a"), b = scratch("mc-b");
    std::ostringstream log;
    auto args_a = base, args_b = base;
    args_a.insert(args_a.end(), {"--output", a.string()});
    args_b.insert(args_b.end(), {"--output", b.string()});
    ASSERT_EQ(run_args(args_a, log), exit_ok);
    ASSERT_EQ(run_args(args_b, log), exit_ok);
    for (const char* f : {"snapshots.csv", "summary.csv"}) {
        EXPECT_FALSE(slurp(a / f).empty());
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_EQ(slurp(a / "snapshots.csv").substr(0, 21), "step,agent_id,wealth\n");
    EXPECT_EQ(slurp(a / "summary.csv").substr(0, 18), "step,gini,mean,m2\n");
}

TEST(RunPipeline, ReplicasAreIndependentAndDeterministic) {
    const fs::path a = scratch("rep-a"), b = scratch("rep-b");
    std::ostringstream log;
    const std::vector<std::string> base = {"simulate-mc", "--agents", "100", "--steps", "50", "--replicas", "3",
                                           "--no-snapshots"};
    auto args_a = base, args_b = base;
    args_a.insert(args_a.end(), {"--output", a.string(), "--threads", "3"});
    args_b.insert(args_b.end(), {"--output", b.string(), "--threads", "1"});
    ASSERT_EQ(run_args(args_a, log), exit_ok);
    ASSERT_EQ(run_args(args_b, log), exit_ok);
    EXPECT_EQ(slurp(a / "ensemble.csv"), slurp(b / "ensemble.csv"));
    EXPECT_NE(slurp(a / "replica-000" / "summary.csv"), slurp(a / "replica-001" / "summary.csv"));
    EXPECT_FALSE(fs::exists(a / "replica-000" / "snapshots.csv"));
}

TEST(RunPipeline, SolveFpWritesSeriesAndJsonFormat) {
    const fs::path dir = scratch("fp");
    std::ostringstream log;
    ASSERT_EQ(run_args({"solve-fp", "--grid-lo", "1e-2", "--grid-points", "150", "--t-end", "1", "--record-every",
                        "0.5", "--format", "json", "--output", dir.string()},
                       log),
              exit_ok)
        << log.str();
    const auto density = read_json(dir / "density.json");
    EXPECT_EQ(density["columns"], nlohmann::json::array({"time", "w", "P"}));
    EXPECT_EQ(density["rows"].size(), 3u * 150u);
    const auto mom = read_json(dir / "moments.json");
    EXPECT_EQ(mom["columns"], nlohmann::json::array({"time", "N", "W", "boundary_flux_lo", "boundary_flux_hi"}));
    EXPECT_EQ(mom["rows"].size(), 3u);
}

TEST(RunPipeline, ConservationAbortIsMarkedIncomplete) {
    const fs::path dir = scratch("fp-abort");
    std::ostringstream log;
    const int code = run_args({"solve-fp", "--grid-lo", "1e-2", "--grid-points", "60", "--t-end", "5",
                               "--w-drift-abort", "1e-15", "--output", dir.string()},
                              log);
    EXPECT_EQ(code, exit_conservation);
    const auto manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest["status"], "incomplete");
    EXPECT_FALSE(manifest["error"].is_null());
}

TEST(RunPipeline, FitParetoOnSampleAndDensity) {
    const fs::path mc = scratch("fit-mc"), fit = scratch("fit-out"), ss = scratch("fit-ss");
    std::ostringstream log;
    ASSERT_EQ(run_args({"simulate-mc", "--agents", "5000", "--steps", "500", "--record-every", "500", "--output",
                        mc.string()},
                       log),
              exit_ok);
    ASSERT_EQ(run_args({"fit-pareto", "--input", (mc / "snapshots.csv").string(), "--output", fit.string()}, log),
              exit_ok)
        << log.str();
    const auto fits = read_json(fit / "pareto_fit.json");
    ASSERT_EQ(fits.size(), 2u);
    EXPECT_EQ(fits[0]["method"], "loglog");
    EXPECT_EQ(fits[1]["method"], "hill");
    EXPECT_GT(fits[1]["alpha"].get<double>(), 0.0);

    ASSERT_EQ(run_args({"steady-state", "--grid-lo", "1e-2", "--grid-points", "300", "--output", ss.string()}, log),
              exit_ok);
    ASSERT_EQ(run_args({"fit-pareto", "--input", (ss / "density.csv").string(), "--output", fit.string()}, log),
              exit_ok);
    EXPECT_EQ(read_json(fit / "pareto_fit.json").size(), 1u);
}

TEST(Tool, ExitCodes) {
    const fs::path dir = scratch("tool");
    EXPECT_EQ(run_tool("--help"), exit_ok);
    EXPECT_EQ(run_tool("simulate-mc --beta 1.5"), exit_usage);
    EXPECT_EQ(run_tool("steady-state --chi 0"), exit_usage);
    EXPECT_EQ(run_tool("fit-pareto --input " + (dir / "missing.csv").string() + " --output " + dir.string()),
              exit_io);
    EXPECT_EQ(run_tool("steady-state --max-iter 2 --grid-lo 1e-2 --grid-points 200 --output " + dir.string()),
              exit_not_converged);
}

TEST(Tool, ValidateOnDefaultsPasses) {
    const fs::path dir = scratch("validate");
    EXPECT_EQ(run_tool("validate --output " + dir.string()), exit_ok);
    const auto report = read_json(dir / "validation.json");
    ASSERT_EQ(report.size(), 4u);
    for (const auto& check : report) {
        EXPECT_TRUE(check["passed"].get<bool>()) << check.dump();
        EXPECT_TRUE(check.contains("measured"));
        EXPECT_TRUE(check.contains("threshold"));
    }
}
