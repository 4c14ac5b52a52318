#include <cmath>
#include <sstream>

#include "bdsde/envelope.hpp"
#include "bdsde/error.hpp"
#include "bdsde/tree_solver.hpp"
#include "doctest.h"

using namespace bdsde;

namespace {

EnvelopeOptions scalarOpts(std::vector<double> schedule = {}) {
  EnvelopeOptions o;
  o.backend = Backend::Scalar;
  o.schedule = std::move(schedule);
  return o;
}

DriverSpec shifted(const DriverSpec& d, double eps) {
  DriverPart p = fPartOf(d);
  auto base = p.fn;
  p.fn = [base, eps](double t, double y, double z) { return base(t, y, z) + eps; };
  if (p.growthD) p.growthD = *p.growthD + eps;
  return withFPart(d, p);
}

}  // namespace

TEST_CASE("Lipschitz driver: the first iterate is the direct solve") {
  auto d = builtinDriver("f_linear", {0.8, 0.4}, "g_linear", {0.5});
  auto t = builtinTerminal("w_terminal_pos");
  auto grid = makeGrid(1.0, 8);
  auto side = maximalSolution(d, t, grid);
  REQUIRE(side.log.size() == 2);
  CHECK(side.converged);
  CHECK(side.log[1].supDistPrev < 1e-6);
  auto direct = solveTree(d, t, grid);
  CHECK(supDistance(side.log[0].field, direct) == 0.0);
  auto low = minimalSolution(d, t, grid, EnvelopeOptions{.schedule = {0.8}});
  CHECK(low.log.size() == 1);
  CHECK(supDistance(low.solution, direct) == 0.0);
}

TEST_CASE("constant terminal with zero driver") {
  auto grid = makeGrid(1.0, 64);
  auto env = envelope(builtinDriver("zero", {}), builtinTerminal("constant", {1.5}), grid, scalarOpts());
  for (const auto* side : {&env.maximal, &env.minimal})
    for (const auto& r : side->log)
      for (const auto& row : r.field.Y)
        for (double v : row) CHECK(v == 1.5);
}

TEST_CASE("constant driver: both sides integrate to T - t") {
  const int N = 100;
  auto grid = makeGrid(1.0, N);
  auto env = envelope(builtinDriver("f_constant", {1.0}), builtinTerminal("constant", {0.0}), grid, scalarOpts());
  for (int i = 0; i <= N; ++i) {
    CHECK(std::abs(env.maximal.solution.Y[i][0] - (1.0 - grid.t(i))) <= 1e-12);
    CHECK(env.minimal.solution.Y[i][0] == env.maximal.solution.Y[i][0]);
  }
}

TEST_CASE("sqrt driver: maximal and minimal solutions") {
  auto d = builtinDriver("f_sqrt_pos", {2.0});
  auto xi = builtinTerminal("constant", {0.0});
  auto grid = makeGrid(1.0, 4096);
  auto env = envelope(d, xi, grid, scalarOpts({128}));
  // scalar recursion with the closed-form sup-convolution (1/n + n y below
  // y = 1/n^2, 2 sqrt(y) above), evaluated independently
  const double oracle = 1.0034441910035117;
  const double latticeErr = env.maximal.lattice.spacing * 128 * std::exp(2.0);
  CHECK(env.maximal.solution.Y[0][0] <= oracle + 1e-12);
  CHECK(env.maximal.solution.Y[0][0] >= oracle - latticeErr);
  for (const auto& row : env.minimal.solution.Y) CHECK(row[0] == 0.0);
  CHECK(env.maximal.log[0].boundGap <= 0.0);
  CHECK(env.maximal.log[0].boundaryHits == 0);
}

TEST_CASE("default schedule and its diagnostics") {
  auto d = builtinDriver("f_sqrt_pos", {2.0});
  auto grid = makeGrid(1.0, 4096);
  auto side = maximalSolution(d, builtinTerminal("constant", {0.0}), grid, scalarOpts());
  CHECK(side.schedule == std::vector<double>{2, 4, 8, 16, 32, 64, 128, 256});
  REQUIRE(side.log.size() == 8);
  CHECK_FALSE(side.converged);
  for (const auto& r : side.log) CHECK(r.s2 <= 10.0 * side.log[0].s2);
  CHECK(side.boundS2 <= 10.0 * side.log[0].s2);
  // distances between consecutive iterates shrink from some k on
  for (std::size_t k = 3; k < side.log.size(); ++k) CHECK(side.log[k].supDistPrev < side.log[k - 1].supDistPrev);
  std::ostringstream os;
  writeEnvelopeCsv(side, os);
  CHECK(os.str().rfind("k,n_k,supDistPrev,Y0_mean,converged\n0,2,,", 0) == 0);
}

TEST_CASE("stochastic envelope on the tree") {
  auto d = builtinDriver("f_sqrt_pos", {2.0}, "g_linear", {0.5});
  auto xi = builtinTerminal("w_terminal_pos");
  auto grid = makeGrid(1.0, 10);
  auto env = envelope(d, xi, grid);
  CHECK(env.maximal.schedule == std::vector<double>{2, 4});
  CHECK(env.minimal.log.size() == 2);
  auto direct = solveTree(d, xi, grid);
  auto rep = sandwichCheck(direct, env, 10 * grid.dt());
  CHECK(rep.pass);
  CHECK(rep.bandInversion <= env.maximal.latticeErrorBound + env.minimal.latticeErrorBound);
}

TEST_CASE("ordering of envelopes follows the drivers") {
  auto grid = makeGrid(1.0, 10);
  auto xi = builtinTerminal("w_terminal_pos");
  auto d2 = builtinDriver("f_sqrt_pos", {2.0}, "g_linear", {0.5});
  auto d1 = shifted(d2, 0.1);
  auto e1 = envelope(d1, xi, grid);
  auto e2 = envelope(d2, xi, grid);
  const double tol = 10 * grid.dt();
  for (int i = 0; i <= 10; ++i)
    for (std::size_t n = 0; n < e1.maximal.solution.nodes(i); ++n) {
      CHECK(e1.maximal.solution.Y[i][n] >= e2.maximal.solution.Y[i][n] - tol);
      CHECK(e1.minimal.solution.Y[i][n] >= e2.minimal.solution.Y[i][n] - tol);
    }
}

TEST_CASE("sandwich check") {
  auto grid = makeGrid(1.0, 8);
  auto env = envelope(builtinDriver("f_sqrt_pos", {2.0}, "g_linear", {0.3}), builtinTerminal("w_terminal"), grid);
  const double allowance = env.maximal.latticeErrorBound + env.minimal.latticeErrorBound;
  CHECK(allowance > 0.0);
  auto self = sandwichCheck(env.maximal.solution, env, allowance);
  CHECK(self.pass);
  CHECK(self.worstViolation == self.bandInversion);
  // no lattice needed for a Lipschitz driver: the band is exact
  auto lip = envelope(builtinDriver("f_linear", {0.5, 0.5}, "g_linear", {0.3}), builtinTerminal("w_terminal"), grid);
  CHECK(lip.maximal.latticeErrorBound == 0.0);
  auto exact = sandwichCheck(lip.maximal.solution, lip, 0.0);
  CHECK(exact.pass);
  CHECK(exact.worstViolation == 0.0);
  Solution bumped = env.maximal.solution;
  for (auto& row : bumped.Y)
    for (double& v : row) v += 1.0;
  auto bad = sandwichCheck(bumped, env, 1e-6);
  CHECK_FALSE(bad.pass);
  CHECK(bad.aboveMax);
  CHECK(std::abs(bad.worstViolation - 1.0) <= 1e-12);
  CHECK_THROWS_AS(sandwichCheck(solveTree(builtinDriver("zero", {}), builtinTerminal("w_terminal"), makeGrid(1.0, 4)), env, 0.1),
                  Error);
}

TEST_CASE("schedule errors") {
  auto d = builtinDriver("f_sqrt_pos", {2.0});
  auto xi = builtinTerminal("constant", {0.0});
  try {
    maximalSolution(d, xi, makeGrid(1.0, 100), scalarOpts({2, 64}));
    FAIL("expected a scheme error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Scheme);
    CHECK(std::string(e.what()).find("N >= 128") != std::string::npos);
  }
  try {
    maximalSolution(d, xi, makeGrid(1.0, 2), scalarOpts());
    FAIL("expected a scheme error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Scheme);
  }
  CHECK_THROWS_AS(maximalSolution(d, xi, makeGrid(1.0, 100), scalarOpts({1, 4})), Error);
  CHECK_THROWS_AS(maximalSolution(d, xi, makeGrid(1.0, 100), scalarOpts({4, 4})), Error);
  CHECK_THROWS_AS(maximalSolution(d, builtinTerminal("w_terminal"), makeGrid(1.0, 100), scalarOpts()), Error);
}
