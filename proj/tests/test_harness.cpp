#include <cmath>
#include <sstream>

#include "bdsde/error.hpp"
#include "bdsde/harness.hpp"
#include "bdsde/kneser.hpp"
#include "bdsde/tree_solver.hpp"
#include "doctest.h"

using namespace bdsde;

namespace {

ComparisonCase basicCase(Problem upper, Problem lower, int N) {
  ComparisonCase c;
  c.name = "case";
  c.upper = std::move(upper);
  c.lower = std::move(lower);
  c.grid = makeGrid(1.0, N);
  return c;
}

}  // namespace

TEST_CASE("identical problems have margin 0") {
  Problem p{builtinDriver("f_linear", {0.5, 0.3}, "g_linear", {0.4}), builtinTerminal("w_terminal_pos")};
  auto rep = compareSolutions(basicCase(p, p, 8));
  CHECK(rep.pass);
  CHECK(rep.worstMargin == 0.0);
  CHECK(rep.premise.holds);
  CHECK(rep.premise.driverGap == 0.0);
}

TEST_CASE("constant driver gap integrates to T - t") {
  auto c = basicCase({builtinDriver("f_constant", {1.0}), builtinTerminal("constant", {0.0})},
                     {builtinDriver("zero", {}), builtinTerminal("constant", {0.0})}, 8);
  auto rep = compareSolutions(c);
  CHECK(rep.pass);
  CHECK(rep.worstMargin == 0.0);
  auto a = solveTree(c.upper.driver, c.upper.terminal, c.grid);
  auto b = solveTree(c.lower.driver, c.lower.terminal, c.grid);
  for (int i = 0; i <= 8; ++i)
    for (std::size_t e = 0; e < a.nodes(i); ++e) CHECK(a.Y[i][e] - b.Y[i][e] == doctest::Approx(1.0 - c.grid.t(i)));
}

TEST_CASE("positive part against the identity terminal, N = 2") {
  const auto zero = builtinDriver("zero", {});
  auto c = basicCase({zero, builtinTerminal("w_terminal_pos")}, {zero, builtinTerminal("w_terminal")}, 2);
  auto rep = compareSolutions(c);
  CHECK(rep.pass);
  CHECK(rep.worstMargin >= 0.0);
  auto a = solveTree(zero, c.upper.terminal, c.grid);
  auto b = solveTree(zero, c.lower.terminal, c.grid);
  for (double y : a.Y[0]) CHECK(y == doctest::Approx(0.35355339059327373).epsilon(1e-14));
  for (double y : b.Y[0]) CHECK(std::abs(y) <= 1e-15);
}

TEST_CASE("premise violations are rejected with a witness") {
  auto suite = premiseControlSuite();
  CHECK(suite.cases.empty());
  CHECK(suite.rejected.size() == 3);

  const auto d = builtinDriver("f_linear", {0.5, 0.0});
  auto c = basicCase({d, builtinTerminal("w_terminal")}, {d, builtinTerminal("w_terminal_pos")}, 4);
  try {
    compareSolutions(c);
    FAIL("premise not caught");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Premise);
    CHECK(std::string(e.what()).find("leaf") != std::string::npos);
  }
  auto p = checkPremise(c);
  CHECK_FALSE(p.holds);
  CHECK(p.terminalGap < 0.0);
  CHECK(p.probes == 10000);
}

TEST_CASE("stability guard") {
  const auto d = builtinDriver("f_linear", {4.0, 0.0});
  auto c = basicCase({d, builtinTerminal("constant", {1.0})}, {d, builtinTerminal("constant", {0.0})}, 4);
  CHECK_THROWS_AS(compareSolutions(c), Error);
  c.grid = makeGrid(1.0, 16);
  CHECK(compareSolutions(c).pass);
}

TEST_CASE("randomized Lipschitz suite") {
  auto suite = lipschitzSuite(50, 2024);
  CHECK(suite.cases.size() == 50);
  CHECK(suite.failed() == 0);
  CHECK(suite.worstMargin() >= -1e-12);
  auto again = lipschitzSuite(50, 2024);
  for (std::size_t k = 0; k < suite.cases.size(); ++k) CHECK(again.cases[k].worstMargin == suite.cases[k].worstMargin);

  std::ostringstream csv, summary;
  writeSuiteCsv(suite, csv);
  writeSuiteSummary({suite}, summary);
  CHECK(csv.str().rfind("name,kind,premise,worstMargin,tol,pass\nlipschitz_0,lipschitz,1,", 0) == 0);
  CHECK(summary.str().rfind("suite,seed,cases,passed,failed,rejected,worstMargin\nlipschitz,2024,50,50,0,0,", 0) == 0);
}

TEST_CASE("envelope and separating suites") {
  auto env = envelopeSuite();
  CHECK(env.cases.size() == 3);
  for (const auto& r : env.cases) {
    INFO(r.name << " margin " << r.worstMargin);
    CHECK(r.pass);
    CHECK(r.margins.size() == 2);
  }
  auto sep = separatingSuite();
  CHECK(sep.cases.size() == 2);
  for (const auto& r : sep.cases) {
    INFO(r.name << " margins " << r.margins[0] << " " << r.margins[1]);
    CHECK(r.pass);
    CHECK(r.margins[0] >= -r.tol);
    CHECK(r.margins[1] >= -r.tol);
  }
}

TEST_CASE("convergence: linear growth") {
  auto table = convergenceStudy("linear_growth", {64, 128, 256, 512}, "scalar");
  REQUIRE(table.rows.size() == 4);
  CHECK(std::isnan(table.rows[0].ratio));
  CHECK(table.rows[3].error == doctest::Approx(std::abs(std::pow(1.0 + 1.0 / 512, 512) - std::exp(1.0))).epsilon(1e-9));
  CHECK(table.rows[3].error == doctest::Approx(0.00265).epsilon(0.01));
  for (std::size_t k = 1; k < 4; ++k) {
    CHECK(table.rows[k].ratio >= 1.7);
    CHECK(table.rows[k].ratio <= 2.4);
  }
  auto tree = convergenceStudy("linear_growth", {4, 8, 16}, "tree");
  auto scalar = convergenceStudy("linear_growth", {4, 8, 16}, "scalar");
  for (std::size_t k = 0; k < 3; ++k) CHECK(tree.rows[k].error == doctest::Approx(scalar.rows[k].error).epsilon(1e-13));

  std::ostringstream csv;
  writeErrorTableCsv(table, csv);
  CHECK(csv.str().rfind("N,error,ratio\n64,", 0) == 0);
}

TEST_CASE("convergence: exact cases and errors") {
  for (const auto* backend : {"tree", "mc"}) {
    auto t = convergenceStudy("additive_noise", {2, 4, 8}, backend);
    for (const auto& r : t.rows) CHECK(r.error <= 1e-12);
  }
  auto m = convergenceStudy("martingale", {2, 4, 8}, "tree");
  for (const auto& r : m.rows) CHECK(r.error <= 1e-12);
  CHECK_THROWS_AS(convergenceStudy("no_such_case", {4}, "tree"), Error);
  CHECK_THROWS_AS(convergenceStudy("linear_growth", {8, 4}, "tree"), Error);
  CHECK_THROWS_AS(convergenceStudy("linear_growth", {8}, "gpu"), Error);
}

TEST_CASE("closedness: constant sequence and corrupted tail") {
  const auto d = builtinDriver("f_linear", {0.5, 0.2}, "g_linear", {0.3});
  const auto xi = builtinTerminal("call", {0.1});
  auto sol = solveTree(d, xi, makeGrid(1.0, 8));
  auto rep = closednessCheck({sol, sol, sol}, d, xi, 1e-10);
  CHECK(rep.pass);
  CHECK(rep.residual <= 1e-10);
  CHECK(rep.successiveDistances == std::vector<double>{0.0, 0.0});

  auto bad = sol;
  bad.Y[3][5] += 0.01;
  auto neg = closednessCheck({sol, bad}, d, xi, 1e-10);
  CHECK_FALSE(neg.pass);
  // the bump enters step 3 directly and step 2 through f
  CHECK(neg.residual == doctest::Approx(0.01 * (1.0 + 0.5 / 8)).epsilon(1e-9));
  CHECK(neg.step == 2);

  auto other = solveTree(d, xi, makeGrid(1.0, 6));
  CHECK_THROWS_AS(closednessCheck({sol, other}, d, xi, 1e-10), Error);
  CHECK_THROWS_AS(closednessCheck({sol}, d, xi, 1e-10), Error);
}

TEST_CASE("closedness: glued solutions as lambda decreases to 1/2") {
  const TimeGrid grid = makeGrid(1.0, 4096);
  const auto d = builtinDriver("f_sqrt_pos", {2.0});
  EnvelopeOptions opt;
  opt.backend = Backend::Scalar;
  const auto env = envelope(d, builtinTerminal("constant", {0.0}), grid, opt);
  const int i0 = 2048;
  std::vector<Solution> seq;
  double snap = 0.0;
  for (int k = 1; k <= 8; ++k) {
    const double lambda = 0.5 + std::ldexp(1.0, -k);
    auto g = glueDeterministic(d, i0, interpolateTarget(env, i0, lambda)[0], env);
    snap = g.snapTol;
    seq.push_back(g.asSolution(grid));
  }
  const double tolGlue = snap + 1e-9 * (1.0 + seq.back().maxAbsY());
  auto rep = closednessCheck(seq, d, builtinTerminal("constant", {0.0}), tolGlue);
  INFO("residual " << rep.residual << " tol " << tolGlue);
  CHECK(rep.pass);
  for (std::size_t k = 1; k < rep.successiveDistances.size(); ++k)
    CHECK(rep.successiveDistances[k] <= rep.successiveDistances[k - 1] * 0.75);
}
