// bdsde_lab: config-driven scenario runner and catalog browser.
//
//   bdsde_lab catalog
//   bdsde_lab run --config cfg.json [--seed S] [--out DIR] [--backend tree|mc|scalar]
//                 [--threads N] [--log-level error|warn|info|debug]
//
// Exit status: 0 ok, 1 property failure, 2 config error, 3 numeric or
// capacity error.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bdsde/envelope.hpp"
#include "bdsde/error.hpp"
#include "bdsde/harness.hpp"
#include "bdsde/kneser.hpp"
#include "bdsde/mc_solver.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/tree_solver.hpp"

#ifndef BDSDE_VERSION
#define BDSDE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace bdsde;

namespace {

enum Exit { kOk = 0, kPropertyFailure = 1, kConfigError = 2, kNumericError = 3 };

[[noreturn]] void configError(const std::string& msg) { fail(ErrorKind::Config, msg); }

void allowKeys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) configError(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) configError("unknown key '" + k + "' in " + where);
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) configError("missing key '" + std::string(key) + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    configError("key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <class T>
T getOr(const json& obj, const char* key, const std::string& where, T fallback) {
  return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

CatalogRef parseRef(const json& j, const std::string& where) {
  allowKeys(j, where, {"name", "params"});
  return {get<std::string>(j, "name", where), getOr<std::vector<double>>(j, "params", where, {})};
}

Problem parseProblem(const json& driver, const json& terminal, const std::string& where) {
  allowKeys(driver, where + ".driver", {"f", "g"});
  const CatalogRef f = parseRef(get<json>(driver, "f", where + ".driver"), where + ".driver.f");
  const CatalogRef g = driver.contains("g") ? parseRef(driver.at("g"), where + ".driver.g") : CatalogRef{"g_zero", {}};
  return {builtinDriver(f, g), builtinTerminal(parseRef(terminal, where + ".terminal"))};
}

Backend envelopeBackend(const std::string& b) {
  if (b == "scalar") return Backend::Scalar;
  if (b == "tree") return Backend::Tree;
  configError("backend '" + b + "' is not available for this scenario");
}

std::string compiler() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

class Runner {
 public:
  Runner(json config, fs::path out) : cfg_(std::move(config)), out_(std::move(out)) {}

  int run() {
    validateTop();
    fs::create_directories(out_);
    const std::string kind = cfg_["scenario"];
    int status = kOk;
    if (kind == "solve") status = solve();
    else if (kind == "envelope") status = runEnvelope();
    else if (kind == "kneser") status = runKneser();
    else if (kind == "compare") status = runCompare();
    else status = runConvergence();
    writeManifest(status);
    return status;
  }

 private:
  void validateTop() {
    allowKeys(cfg_, "config",
              {"scenario", "grid", "driver", "terminal", "backend", "seed", "out", "solve", "envelope", "kneser",
               "compare", "convergence"});
    const std::string kind = get<std::string>(cfg_, "scenario", "config");
    const std::set<std::string> kinds{"solve", "envelope", "kneser", "compare", "convergence"};
    if (!kinds.count(kind)) configError("unknown scenario '" + kind + "'");
    for (const auto& k : kinds)
      if (k != kind && cfg_.contains(k)) configError("block '" + k + "' does not belong to scenario '" + kind + "'");
    backend_ = getOr<std::string>(cfg_, "backend", "config", "tree");
    if (backend_ != "tree" && backend_ != "mc" && backend_ != "scalar")
      configError("backend must be tree, mc or scalar, got '" + backend_ + "'");
    seed_ = getOr<std::uint64_t>(cfg_, "seed", "config", 1);
    if (kind != "compare" && kind != "convergence") {
      grid_ = parseGrid();
      problem_ = parseProblem(cfg_.value("driver", json::object({{"f", {{"name", "zero"}}}})),
                              get<json>(cfg_, "terminal", "config"), "config");
      validateDriver(problem_.driver);
    } else {
      for (const char* k : {"grid", "driver", "terminal"})
        if (cfg_.contains(k)) configError("key '" + std::string(k) + "' is not used by scenario '" + kind + "'");
    }
  }

  TimeGrid parseGrid() {
    const json g = get<json>(cfg_, "grid", "config");
    allowKeys(g, "grid", {"T", "N"});
    const double T = get<double>(g, "T", "grid");
    const int N = get<int>(g, "N", "grid");
    if (!(T > 0.0) || !std::isfinite(T)) configError("grid.T must be positive");
    if (N < 1 || N > kMaxGridSteps) configError("grid.N must be in [1, " + std::to_string(kMaxGridSteps) + "]");
    if (backend_ == "tree" && N > kMaxTreeSteps)
      configError("tree backend needs grid.N <= " + std::to_string(kMaxTreeSteps));
    return makeGrid(T, N);
  }

  std::ofstream open(const std::string& name) {
    outputs_.push_back(name);
    std::ofstream f(out_ / name, std::ios::binary);
    if (!f) fail(ErrorKind::Capacity, "cannot write " + (out_ / name).string());
    return f;
  }

  int solve() {
    const json blk = cfg_.value("solve", json::object());
    allowKeys(blk, "solve", {"dump", "outer", "inner", "antithetic", "basis", "degree"});
    if (backend_ == "mc") {
      const int outer = getOr<int>(blk, "outer", "solve", 1);
      const int inner = getOr<int>(blk, "inner", "solve", 10000);
      if (outer < 1 || inner < 2) configError("solve.outer >= 1 and solve.inner >= 2 required");
      BasisSpec basis;
      const std::string kind = getOr<std::string>(blk, "basis", "solve", "polynomial");
      if (kind == "indicator") basis.kind = BasisSpec::Kind::Indicator;
      else if (kind != "polynomial") configError("solve.basis must be polynomial or indicator");
      basis.degree = getOr<int>(blk, "degree", "solve", 2);
      const PathBatch paths = samplePaths(grid_, outer, inner, seed_, getOr<bool>(blk, "antithetic", "solve", false));
      const MCSolution sol = solveLSMC(problem_.driver, problem_.terminal, basis, paths);
      auto csv = open("solve_mc.csv");
      csv << "path,Y0,innerSd\n";
      for (int o = 0; o < outer; ++o) csv << o << ',' << fmt17(sol.y0[o]) << ',' << fmt17(sol.y0InnerSd[o]) << '\n';
      results_["y0_mean"] = fmt17(mean(sol.y0));
      return kOk;
    }
    const Solution sol = backend_ == "scalar" ? solveScalar(problem_.driver, problem_.terminal, grid_)
                                              : solveTree(problem_.driver, problem_.terminal, grid_);
    auto csv = open("solve_summary.csv");
    writeSummaryCsv(sol, csv);
    if (getOr<bool>(blk, "dump", "solve", false)) {
      auto bin = open("solution.bin");
      writeBinary(sol, problem_.driver.descriptor() + ";" + problem_.terminal.descriptor(), bin);
    }
    const double res = treeResidual(sol, problem_.driver, problem_.terminal);
    results_["y0_mean"] = fmt17(expectationAt(sol, 0).mean);
    results_["residual"] = fmt17(res);
    return kOk;
  }

  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }

  EnvelopeOptions envelopeOptions(const json& blk, const std::string& where) {
    EnvelopeOptions opt;
    opt.backend = envelopeBackend(backend_);
    opt.schedule = getOr<std::vector<double>>(blk, "schedule", where, {});
    opt.tol = getOr<double>(blk, "tol", where, opt.tol);
    opt.gridTol = getOr<double>(blk, "gridTol", where, opt.gridTol);
    if (!(opt.tol > 0.0) || !(opt.gridTol > 0.0)) configError(where + ": tol and gridTol must be positive");
    return opt;
  }

  int runEnvelope() {
    const json blk = cfg_.value("envelope", json::object());
    allowKeys(blk, "envelope", {"schedule", "tol", "gridTol"});
    const EnvelopeResult env = envelope(problem_.driver, problem_.terminal, grid_, envelopeOptions(blk, "envelope"));
    for (const auto* side : {&env.maximal, &env.minimal}) {
      const std::string name = side == &env.maximal ? "max" : "min";
      auto csv = open("envelope_" + name + ".csv");
      writeEnvelopeCsv(*side, csv);
      results_["Y0_" + name] = fmt17(expectationAt(side->solution, 0).mean);
      results_["converged_" + name] = side->converged;
    }
    auto steps = open("envelope_band.csv");
    steps << "step,t,Ymax_mean,Ymin_mean\n";
    for (int i = 0; i <= grid_.steps(); ++i)
      steps << i << ',' << fmt17(grid_.t(i)) << ',' << fmt17(expectationAt(env.maximal.solution, i).mean) << ','
            << fmt17(expectationAt(env.minimal.solution, i).mean) << '\n';
    return kOk;
  }

  int runKneser() {
    const json blk = get<json>(cfg_, "kneser", "config");
    allowKeys(blk, "kneser", {"t0", "lambdas", "snapTol", "schedule", "tol", "gridTol"});
    const double t0 = get<double>(blk, "t0", "kneser");
    const double pos = t0 / grid_.dt();
    const int i0 = static_cast<int>(std::lround(pos));
    if (std::abs(pos - i0) > 1e-9 || i0 < 0 || i0 >= grid_.steps())
      configError("kneser.t0 must be a grid point in [0, T)");
    const auto lambdas = get<std::vector<double>>(blk, "lambdas", "kneser");
    if (lambdas.empty()) configError("kneser.lambdas is empty");
    for (double l : lambdas)
      if (!(l >= 0.0 && l <= 1.0)) configError("kneser.lambdas must lie in [0, 1]");

    ContinuumCase spec{problem_.driver, problem_.terminal, grid_, i0, envelopeOptions(blk, "kneser"), {}, {}};
    if (blk.contains("snapTol")) spec.glue.snapTol = get<double>(blk, "snapTol", "kneser");
    if (spec.envelope.backend == Backend::Tree) spec.inverse = builtinInverse(problem_.driver);
    const ContinuumReport rep = continuumSample(spec, lambdas);
    auto csv = open("kneser.csv");
    writeContinuumCsv(rep, csv);
    bool ok = true;
    for (const auto& r : rep.rows) ok = ok && r.sandwichPass && r.etaExact;
    results_["distinct_pairs"] = rep.distinctPairs;
    results_["all_sandwich"] = ok;
    if (spec.inverse) results_["hLipZsq_flag"] = spec.inverse->report.hLipFlag;
    return ok ? kOk : kPropertyFailure;
  }

  int runCompare() {
    const json blk = get<json>(cfg_, "compare", "config");
    allowKeys(blk, "compare", {"suite", "count", "N"});
    const std::string which = get<std::string>(blk, "suite", "compare");
    const int count = getOr<int>(blk, "count", "compare", 50);
    const int N = getOr<int>(blk, "N", "compare", 12);
    if (count < 1) configError("compare.count must be positive");
    if (N < 1 || N > 14) configError("compare.N must be in [1, 14]");
    std::vector<SuiteReport> suites;
    if (which == "lipschitz" || which == "all") suites.push_back(lipschitzSuite(count, seed_, N));
    if (which == "envelope" || which == "all") suites.push_back(envelopeSuite());
    if (which == "separating" || which == "all") suites.push_back(separatingSuite());
    if (which == "premise_control" || which == "all") suites.push_back(premiseControlSuite());
    if (suites.empty()) configError("compare.suite must be lipschitz, envelope, separating, premise_control or all");
    int status = kOk;
    for (const auto& s : suites) {
      auto csv = open("compare_" + s.name + ".csv");
      writeSuiteCsv(s, csv);
      if (s.failed() > 0) status = kPropertyFailure;
      // the control suite must reject every case
      if (s.name == "premise_control" && !s.cases.empty()) status = kPropertyFailure;
    }
    auto summary = open("compare_summary.csv");
    writeSuiteSummary(suites, summary);
    return status;
  }

  int runConvergence() {
    const json blk = get<json>(cfg_, "convergence", "config");
    allowKeys(blk, "convergence", {"case", "Ns"});
    const auto Ns = get<std::vector<int>>(blk, "Ns", "convergence");
    for (int n : Ns)
      if (n < 1 || n > (backend_ == "tree" ? kMaxTreeSteps : kMaxGridSteps)) configError("convergence.Ns out of range");
    const std::string id = get<std::string>(blk, "case", "convergence");
    const auto& ids = closedFormCases();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) configError("unknown closed-form case '" + id + "'");
    const ErrorTable table = convergenceStudy(id, Ns, backend_, seed_);
    auto csv = open("convergence.csv");
    writeErrorTableCsv(table, csv);
    return kOk;
  }

  void writeManifest(int status) {
    json m;
    m["config"] = cfg_;
    m["seed"] = seed_;
    m["status"] = status;
    m["versions"] = {{"bdsde_lab", BDSDE_VERSION},
                     {"compiler", compiler()},
                     {"boost", BOOST_LIB_VERSION},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["outputs"] = outputs_;
    m["results"] = results_;
    std::ofstream f(out_ / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
  }

  json cfg_;
  fs::path out_;
  std::string backend_;
  std::uint64_t seed_ = 1;
  TimeGrid grid_;
  Problem problem_;
  std::vector<std::string> outputs_;
  json results_ = json::object();
};

int exitFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Catalog:
    case ErrorKind::InvalidArgument:
    case ErrorKind::AssumptionViolation:
    case ErrorKind::Precondition:
      return kConfigError;
    case ErrorKind::Premise:
      return kPropertyFailure;
    default:
      return kNumericError;
  }
}

void printCatalog() {
  auto section = [](const char* title, const std::vector<CatalogEntry>& entries) {
    std::cout << title << '\n';
    for (const auto& e : entries) std::cout << "  " << e.name << "  arity " << e.arity << "  " << e.formula << '\n';
  };
  section("drivers (f):", fCatalog());
  section("drivers (g):", gCatalog());
  section("terminals:", terminalCatalog());
  std::cout << "closed-form cases:\n";
  for (const auto& c : closedFormCases()) std::cout << "  " << c << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bdsde_lab: scenario runner for the discrete BDSDE solvers"};
  app.require_subcommand(1);
  auto* catalog = app.add_subcommand("catalog", "list drivers, terminals and closed-form cases");
  auto* run = app.add_subcommand("run", "run a scenario from a JSON config");
  std::string configPath, outDir, backend, logLevel = "warn";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  run->add_option("--config", configPath, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", outDir, "output directory");
  run->add_option("--backend", backend, "tree, mc or scalar")->check(CLI::IsMember({"tree", "mc", "scalar"}));
  run->add_option("--threads", threads, "worker threads (overrides BDSDE_LAB_THREADS)")->check(CLI::PositiveNumber);
  run->add_option("--log-level", logLevel, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (catalog->parsed()) {
    printCatalog();
    return kOk;
  }

  auto logger = spdlog::stderr_color_mt("bdsde_lab");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(logLevel));

  if (threads == 0)
    if (const char* env = std::getenv("BDSDE_LAB_THREADS")) threads = std::atoi(env);
  setThreads(threads);

  const auto start = std::chrono::steady_clock::now();
  try {
    json cfg;
    {
      std::ifstream in(configPath);
      try {
        cfg = json::parse(in);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (!cfg.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
    if (seed) cfg["seed"] = *seed;
    if (!backend.empty()) cfg["backend"] = backend;
    if (!outDir.empty()) cfg["out"] = outDir;
    const fs::path out = cfg.contains("out") && cfg["out"].is_string() ? fs::path(cfg["out"].get<std::string>())
                                                                      : fs::path("bdsde_out");
    Runner runner(cfg, out);
    const int status = runner.run();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream(out / "timing.json") << json{{"wall_seconds", wall}, {"threads", maxThreads()}}.dump(2) << '\n';
    spdlog::info("{} finished with status {} in {:.3f} s", cfg["scenario"].get<std::string>(), status, wall);
    if (status == kPropertyFailure) std::cerr << "property check failed; see " << out.string() << '\n';
    return status;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exitFor(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericError;
  }
}
