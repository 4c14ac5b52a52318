#include "bdsde/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <tuple>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "bdsde/error.hpp"
#include "bdsde/mc_solver.hpp"
#include "bdsde/tree_solver.hpp"

namespace bdsde {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kOrderSlack = 1e-12;

Solution solveDirect(const Problem& p, const TimeGrid& grid, Backend backend) {
  if (backend == Backend::Scalar) return solveScalar(p.driver, p.terminal, grid);
  return solveTree(p.driver, p.terminal, grid);
}

struct Margin {
  double value = std::numeric_limits<double>::infinity();
  int step = -1;
  std::size_t node = 0;
};

Margin minMargin(const Solution& a, const Solution& b) {
  require(a.layout == b.layout && a.grid == b.grid, ErrorKind::InvalidArgument, "compared fields differ in shape");
  Margin m;
  for (int i = 0; i <= a.steps(); ++i)
    for (std::size_t e = 0; e < a.nodes(i); ++e) {
      double d = a.Y[i][e] - b.Y[i][e];
      if (std::isnan(d)) d = -std::numeric_limits<double>::infinity();
      if (d < m.value) m = {d, i, e};
    }
  return m;
}

DriverSpec addToF(const DriverSpec& d, ScalarFn extra, double extraLip, std::string label, bool usesY = false,
                  bool usesZ = false) {
  DriverPart p = fPartOf(d);
  p.dependsOnY = p.dependsOnY || usesY;
  p.dependsOnZ = p.dependsOnZ || usesZ;
  auto base = p.fn;
  p.fn = [base, extra](double t, double y, double z) { return base(t, y, z) + extra(t, y, z); };
  if (p.lipschitz) p.lipschitz = *p.lipschitz + extraLip;
  if (p.growthK) p.growthK = *p.growthK + extraLip;
  const double at0 = std::abs(extra(0.0, 0.0, 0.0));
  if (p.growthD) p.growthD = *p.growthD + at0;
  p.label = p.label + "+" + label;
  DriverSpec out = withFPart(d, p);
  return out;
}

TerminalSpec shiftTerminal(const TerminalSpec& t, double c) {
  TerminalSpec out = t;
  auto base = t.evaluate;
  out.evaluate = [base, c](std::span<const double> w) { return base(w) + c; };
  if (t.constantValue) out.constantValue = *t.constantValue + c;
  if (t.boundC0) out.boundC0 = *t.boundC0 + std::abs(c);
  out.ref.name = t.ref.name + "+shift";
  out.ref.params.push_back(c);
  return out;
}

double defaultTol(const TimeGrid& grid, double supY) { return 1e-9 + 10.0 * grid.dt() * (1.0 + supY); }

}  // namespace

std::string_view comparisonKindName(ComparisonKind kind) {
  switch (kind) {
    case ComparisonKind::Lipschitz: return "lipschitz";
    case ComparisonKind::Envelope: return "envelope";
    case ComparisonKind::Separating: return "separating";
  }
  return "?";
}

PremiseReport checkPremise(const ComparisonCase& c) {
  PremiseReport rep;
  const auto& d1 = c.upper.driver;
  const auto& d2 = c.lower.driver;
  double c0 = 1.0;
  if (c.upper.terminal.boundC0) c0 = std::max(c0, *c.upper.terminal.boundC0);
  if (c.lower.terminal.boundC0) c0 = std::max(c0, *c.lower.terminal.boundC0);
  const double box = 10.0 * c0;
  const double need = c.kind == ComparisonKind::Separating ? c.epsBar : 0.0;
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> ut(0.0, c.grid.horizon()), uv(-box, box);
  bool worstOnEdge = false;
  auto note = [&](const std::string& what) {
    if (rep.holds) rep.witness = what;
    rep.holds = false;
  };
  for (int k = 0; k < c.premiseProbes; ++k) {
    double t = ut(rng), y = uv(rng), z = uv(rng);
    // a few structured probes: origin and box corners
    if (k < 9) {
      y = (k % 3 - 1) * box;
      z = (k / 3 - 1) * box;
    }
    const double gap = d1.f(t, y, z) - d2.f(t, y, z);
    const double gm = std::abs(d1.g(t, y, z) - d2.g(t, y, z));
    ++rep.probes;
    if (gap < rep.driverGap || std::isnan(gap)) {
      rep.driverGap = std::isnan(gap) ? -std::numeric_limits<double>::infinity() : gap;
      worstOnEdge = std::abs(y) == box || std::abs(z) == box;
    }
    rep.gMismatch = std::max(rep.gMismatch, std::isnan(gm) ? std::numeric_limits<double>::infinity() : gm);
    std::ostringstream at;
    at << "(t, y, z) = (" << t << ", " << y << ", " << z << ")";
    if (!(gap >= need - kOrderSlack)) note("f1 - f2 = " + std::to_string(gap) + " < " + std::to_string(need) + " at " + at.str());
    if (!(gm <= kOrderSlack)) note("g differs by " + std::to_string(gm) + " at " + at.str());
  }
  rep.boxHits = worstOnEdge ? 1 : 0;

  const int N = c.grid.steps();
  const double h = c.grid.sqrtDt();
  std::vector<double> w(N);
  auto checkLeaf = [&](const std::string& where) {
    const double gap = c.upper.terminal.evaluate(w) - c.lower.terminal.evaluate(w);
    rep.terminalGap = std::min(rep.terminalGap, std::isnan(gap) ? -std::numeric_limits<double>::infinity() : gap);
    if (!(gap >= -kOrderSlack)) note("xi1 - xi2 = " + std::to_string(gap) + " at " + where);
  };
  if (N <= 14) {
    for (std::size_t e = 0; e < (std::size_t{1} << N); ++e) {
      for (int i = 0; i < N; ++i) w[i] = ((e >> i) & 1U) ? h : -h;
      checkLeaf("leaf " + std::to_string(e));
    }
  } else {
    for (int p = 0; p < 10000; ++p) {
      for (int i = 0; i < N; ++i) w[i] = h * counterNormal(c.seed, 3, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(i));
      checkLeaf("Gaussian path " + std::to_string(p));
    }
  }
  return rep;
}

ComparisonReport compareSolutions(const ComparisonCase& c) {
  ComparisonReport rep;
  rep.name = c.name;
  rep.kind = c.kind;
  rep.premise = checkPremise(c);
  if (!rep.premise.holds) fail(ErrorKind::Premise, c.name + ": premise fails: " + rep.premise.witness);
  for (const auto* d : {&c.upper.driver, &c.lower.driver}) {
    const double guard = stabilityIndicator(*d, c.grid);
    if (!std::isnan(guard) && guard > 0.5)
      fail(ErrorKind::Scheme, c.name + ": stability guard " + std::to_string(guard) + " > 0.5; refine the grid");
  }

  Margin worst;
  double supY = 0.0;
  auto take = [&](const Margin& m) {
    rep.margins.push_back(m.value);
    if (m.value < worst.value) worst = m;
  };
  switch (c.kind) {
    case ComparisonKind::Lipschitz: {
      const Solution a = solveDirect(c.upper, c.grid, c.backend);
      const Solution b = solveDirect(c.lower, c.grid, c.backend);
      supY = std::max(a.maxAbsY(), b.maxAbsY());
      take(minMargin(a, b));
      break;
    }
    case ComparisonKind::Envelope: {
      EnvelopeOptions opt = c.envelope;
      opt.backend = c.backend;
      const EnvelopeResult a = envelope(c.upper.driver, c.upper.terminal, c.grid, opt);
      const EnvelopeResult b = envelope(c.lower.driver, c.lower.terminal, c.grid, opt);
      for (const auto* s : {&a.minimal.solution, &a.maximal.solution, &b.minimal.solution, &b.maximal.solution})
        supY = std::max(supY, s->maxAbsY());
      take(minMargin(a.minimal.solution, b.minimal.solution));
      take(minMargin(a.maximal.solution, b.maximal.solution));
      break;
    }
    case ComparisonKind::Separating: {
      const DriverPart sep = separatingMollifiedDriver(fPartOf(c.lower.driver), c.epsBar, c.mollifyDelta);
      const Problem mid{withFPart(c.lower.driver, sep), c.lower.terminal};
      const Solution a = solveDirect(c.upper, c.grid, c.backend);
      const Solution m = solveDirect(mid, c.grid, c.backend);
      const Solution b = solveDirect(c.lower, c.grid, c.backend);
      supY = std::max({a.maxAbsY(), m.maxAbsY(), b.maxAbsY()});
      take(minMargin(a, m));
      take(minMargin(m, b));
      break;
    }
  }
  rep.tol = std::isnan(c.tol) ? defaultTol(c.grid, supY) : c.tol;
  rep.worstMargin = worst.value;
  rep.worstStep = worst.step;
  rep.worstNode = worst.node;
  rep.pass = rep.worstMargin >= -rep.tol;
  return rep;
}

int SuiteReport::passed() const {
  return static_cast<int>(std::count_if(cases.begin(), cases.end(), [](const auto& r) { return r.pass; }));
}

int SuiteReport::failed() const { return static_cast<int>(cases.size()) - passed(); }

double SuiteReport::worstMargin() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : cases) m = std::min(m, r.worstMargin);
  return m;
}

SuiteReport lipschitzSuite(int count, std::uint64_t seed, int N) {
  SuiteReport suite;
  suite.name = "lipschitz";
  suite.seed = seed;
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const TimeGrid grid = makeGrid(1.0, N);
  std::vector<ComparisonCase> built;
  for (int k = 0; k < count; ++k) {
    const double a = u(-1.0, 1.0), b = u(-0.5, 0.5);
    CatalogRef gRef;
    switch (k % 3) {
      case 0: gRef = {"g_zero", {}}; break;
      case 1: gRef = {"g_linear", {u(-0.7, 0.7)}}; break;
      default: gRef = {"g_sine", {u(-0.6, 0.6), u(-0.3, 0.3)}}; break;
    }
    const DriverSpec lower = builtinDriver(CatalogRef{"f_linear", {a, b}}, gRef);
    TerminalSpec xi;
    switch (k % 5) {
      case 0: xi = builtinTerminal("constant", {u(-1.0, 1.0)}); break;
      case 1: xi = builtinTerminal("w_terminal"); break;
      case 2: xi = builtinTerminal("w_terminal_pos"); break;
      case 3: xi = builtinTerminal("call", {u(-0.5, 0.5)}); break;
      default: xi = builtinTerminal("w_terminal_sq"); break;
    }
    const double c = u(0.0, 0.5);
    DriverSpec upper;
    switch (k % 4) {
      case 0: upper = addToF(lower, [c](double, double, double) { return c; }, 0.0, "const"); break;
      case 1: upper = addToF(lower, [c](double, double y, double) { return 0.5 * c * (1.0 + std::sin(y)); }, 0.5 * c, "sin", true); break;
      case 2: upper = addToF(lower, [c](double, double, double z) { return c * std::abs(z); }, c, "absz", false, true); break;
      default: upper = addToF(lower, [c](double, double y, double) { return c * std::abs(y); }, c, "absy", true); break;
    }
    ComparisonCase cc;
    cc.name = "lipschitz_" + std::to_string(k);
    cc.upper = {upper, shiftTerminal(xi, u(0.0, 0.3))};
    cc.lower = {lower, xi};
    cc.kind = ComparisonKind::Lipschitz;
    cc.grid = grid;
    cc.seed = seed + static_cast<std::uint64_t>(k);
    built.push_back(std::move(cc));
  }
  suite.cases.resize(built.size());
  std::vector<std::exception_ptr> errors(built.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < count; ++k) {
    try {
      suite.cases[k] = compareSolutions(built[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return suite;
}

SuiteReport envelopeSuite(int N) {
  SuiteReport suite;
  suite.name = "envelope";
  const TimeGrid grid = makeGrid(1.0, N);
  const auto sqrt2 = [](const std::string& g, std::vector<double> p) {
    return builtinDriver(CatalogRef{"f_sqrt_pos", {2.0}}, CatalogRef{g, std::move(p)});
  };
  {
    ComparisonCase c;
    c.name = "sqrt_shift_glinear";
    const auto lower = sqrt2("g_linear", {0.5});
    c.upper = {addToF(lower, [](double, double, double) { return 0.1; }, 0.0, "0.1"), builtinTerminal("w_terminal_pos")};
    c.lower = {lower, builtinTerminal("w_terminal_pos")};
    c.kind = ComparisonKind::Envelope;
    c.grid = grid;
    c.tol = 10.0 * grid.dt();
    suite.cases.push_back(compareSolutions(c));
  }
  {
    ComparisonCase c;
    c.name = "sqrt_terminal_gsine";
    const auto d = sqrt2("g_sine", {0.4, 0.2});
    c.upper = {d, builtinTerminal("w_terminal_pos")};
    c.lower = {d, builtinTerminal("w_terminal")};
    c.kind = ComparisonKind::Envelope;
    c.grid = grid;
    c.tol = 10.0 * grid.dt();
    suite.cases.push_back(compareSolutions(c));
  }
  {
    ComparisonCase c;
    c.name = "sqrt_scale_scalar";
    c.upper = {builtinDriver("f_sqrt_pos", {3.0}), builtinTerminal("constant", {0.2})};
    c.lower = {builtinDriver("f_sqrt_pos", {2.0}), builtinTerminal("constant", {0.0})};
    c.kind = ComparisonKind::Envelope;
    c.grid = makeGrid(1.0, 1024);
    c.tol = 10.0 * c.grid.dt();
    c.backend = Backend::Scalar;
    suite.cases.push_back(compareSolutions(c));
  }
  return suite;
}

SuiteReport separatingSuite(int N) {
  SuiteReport suite;
  suite.name = "separating";
  const TimeGrid grid = makeGrid(1.0, N);
  for (const auto& [name, gRef, xi] : std::vector<std::tuple<std::string, CatalogRef, std::string>>{
           {"sqrt_glinear", {"g_linear", {0.5}}, "w_terminal_pos"},
           {"sqrt_gzero", {"g_zero", {}}, "w_terminal"},
       }) {
    ComparisonCase c;
    c.name = name;
    const auto lower = builtinDriver(CatalogRef{"f_sqrt_pos", {2.0}}, gRef);
    c.upper = {addToF(lower, [](double, double, double) { return 0.2; }, 0.0, "0.2"), builtinTerminal(xi)};
    c.lower = {lower, builtinTerminal(xi)};
    c.kind = ComparisonKind::Separating;
    c.epsBar = 0.2;
    c.grid = grid;
    c.tol = 10.0 * grid.dt();
    suite.cases.push_back(compareSolutions(c));
  }
  return suite;
}

SuiteReport premiseControlSuite() {
  SuiteReport suite;
  suite.name = "premise_control";
  const TimeGrid grid = makeGrid(1.0, 8);
  const auto base = builtinDriver("f_linear", {0.5, 0.0});
  std::vector<ComparisonCase> cases(3);
  cases[0].name = "driver_reversed";
  cases[0].upper = {addToF(base, [](double, double, double) { return -0.1; }, 0.0, "-0.1"), builtinTerminal("w_terminal")};
  cases[0].lower = {base, builtinTerminal("w_terminal")};
  cases[1].name = "terminal_reversed";
  cases[1].upper = {base, builtinTerminal("w_terminal")};
  cases[1].lower = {base, builtinTerminal("w_terminal_pos")};
  cases[2].name = "g_mismatch";
  cases[2].upper = {builtinDriver("f_linear", {0.5, 0.0}, "g_linear", {0.3}), builtinTerminal("w_terminal")};
  cases[2].lower = {base, builtinTerminal("w_terminal")};
  for (auto& c : cases) {
    c.grid = grid;
    try {
      suite.cases.push_back(compareSolutions(c));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Premise) throw;
      suite.rejected.push_back(c.name);
    }
  }
  return suite;
}

void writeSuiteCsv(const SuiteReport& suite, std::ostream& out) {
  out << "name,kind,premise,worstMargin,tol,pass\n";
  for (const auto& r : suite.cases)
    out << r.name << ',' << comparisonKindName(r.kind) << ',' << (r.premise.holds ? 1 : 0) << ','
        << fmt17(r.worstMargin) << ',' << fmt17(r.tol) << ',' << (r.pass ? 1 : 0) << '\n';
  for (const auto& name : suite.rejected) out << name << ",premise,0,,,0\n";
}

void writeSuiteSummary(const std::vector<SuiteReport>& suites, std::ostream& out) {
  out << "suite,seed,cases,passed,failed,rejected,worstMargin\n";
  for (const auto& s : suites)
    out << s.name << ',' << s.seed << ',' << s.cases.size() << ',' << s.passed() << ',' << s.failed() << ','
        << s.rejected.size() << ',' << (s.cases.empty() ? "" : fmt17(s.worstMargin())) << '\n';
}

const std::vector<std::string>& closedFormCases() {
  static const std::vector<std::string> ids = {"linear_growth", "additive_noise", "martingale"};
  return ids;
}

ErrorTable convergenceStudy(const std::string& caseId, const std::vector<int>& Ns, const std::string& backend,
                            std::uint64_t seed) {
  require(std::find(closedFormCases().begin(), closedFormCases().end(), caseId) != closedFormCases().end(),
          ErrorKind::Catalog, "unknown closed-form case '" + caseId + "'");
  require(backend == "tree" || backend == "scalar" || backend == "mc", ErrorKind::InvalidArgument,
          "unknown backend '" + backend + "'");
  require(!Ns.empty(), ErrorKind::InvalidArgument, "no grid sizes given");
  for (std::size_t k = 1; k < Ns.size(); ++k)
    require(Ns[k] > Ns[k - 1], ErrorKind::InvalidArgument, "Ns must be increasing");

  Problem p;
  if (caseId == "linear_growth")
    p = {builtinDriver("f_linear", {1.0, 0.0}), builtinTerminal("constant", {1.0})};
  else if (caseId == "additive_noise")
    p = {builtinDriver("zero", {}, "g_constant", {1.0}), builtinTerminal("constant", {0.0})};
  else
    p = {builtinDriver("zero", {}), builtinTerminal("w_terminal")};

  ErrorTable table;
  table.caseId = caseId;
  table.backend = backend;
  for (int N : Ns) {
    const TimeGrid grid = makeGrid(1.0, N);
    double err = 0.0;
    if (backend == "mc") {
      const bool martingale = caseId == "martingale";
      const PathBatch paths = samplePaths(grid, caseId == "additive_noise" ? 8 : 1, martingale ? 10000 : 64, seed, false);
      const MCSolution sol = solveLSMC(p.driver, p.terminal, BasisSpec{}, paths);
      for (int o = 0; o < paths.outer; ++o) {
        double exact = 0.0;
        if (caseId == "linear_growth") exact = std::numbers::e;
        if (caseId == "additive_noise")
          for (int i = 0; i < N; ++i) exact += paths.b(o, i);
        err = std::max(err, std::abs(sol.y0[o] - exact));
      }
    } else {
      const Solution sol = solveDirect(p, grid, backend == "scalar" ? Backend::Scalar : Backend::Tree);
      for (std::size_t e = 0; e < sol.nodes(0); ++e) {
        double exact = 0.0;
        if (caseId == "linear_growth") exact = std::numbers::e;
        if (caseId == "additive_noise")
          for (int j = 0; j < N; ++j) exact += ((e >> j) & 1U) ? grid.sqrtDt() : -grid.sqrtDt();
        err = std::max(err, std::abs(sol.Y[0][e] - exact));
      }
      if (caseId == "martingale")
        for (int i = 0; i < N; ++i)
          for (double z : sol.Z[i]) err = std::max(err, std::abs(z - 1.0));
    }
    ErrorRow row;
    row.N = N;
    row.error = err;
    if (!table.rows.empty()) row.ratio = table.rows.back().error / err;
    table.rows.push_back(row);
  }
  return table;
}

void writeErrorTableCsv(const ErrorTable& table, std::ostream& out) {
  out << "N,error,ratio\n";
  for (const auto& r : table.rows)
    out << r.N << ',' << fmt17(r.error) << ',' << (std::isnan(r.ratio) ? "" : fmt17(r.ratio)) << '\n';
}

ClosednessReport closednessCheck(const std::vector<Solution>& sequence, const DriverSpec& driver,
                                 const TerminalSpec& terminal, double tol, LimitMode mode) {
  require(sequence.size() >= 2, ErrorKind::InvalidArgument, "closedness check needs at least 2 fields");
  for (const auto& s : sequence) {
    validateShape(s);
    require(s.layout == sequence[0].layout && s.grid == sequence[0].grid && s.splitIndex == sequence[0].splitIndex,
            ErrorKind::InvalidArgument, "closedness check: fields live on different lattices");
  }
  ClosednessReport rep;
  for (std::size_t k = 1; k < sequence.size(); ++k)
    rep.successiveDistances.push_back(supDistance(sequence[k - 1], sequence[k]));
  rep.candidate = sequence.back();
  if (mode == LimitMode::Extrapolate) {
    const Solution& prev = sequence[sequence.size() - 2];
    for (int i = 0; i <= rep.candidate.steps(); ++i)
      for (std::size_t e = 0; e < rep.candidate.nodes(i); ++e) {
        rep.candidate.Y[i][e] = 2.0 * rep.candidate.Y[i][e] - prev.Y[i][e];
        rep.candidate.Z[i][e] = 2.0 * rep.candidate.Z[i][e] - prev.Z[i][e];
      }
  }
  const ResidualReport rr = residualReport(rep.candidate, driver, terminal);
  rep.residual = std::max(rr.maxResidual, rr.terminalMismatch);
  rep.step = rr.maxResidual >= rr.terminalMismatch ? rr.worstStep : rep.candidate.steps();
  rep.node = rr.worstNode;
  rep.pass = rep.residual <= tol;
  return rep;
}

}  // namespace bdsde
