#include <cmath>
#include <sstream>

#include "bdsde/error.hpp"
#include "bdsde/mc_solver.hpp"
#include "bdsde/tree_solver.hpp"
#include "doctest.h"

using namespace bdsde;

TEST_CASE("path batches are reproducible") {
  auto grid = makeGrid(1.0, 8);
  auto a = samplePaths(grid, 4, 64, 7, false);
  auto b = samplePaths(grid, 4, 64, 7, false, 1, 1, Exec::Serial);
  std::ostringstream sa, sb;
  writeBinary(a, sa);
  writeBinary(b, sb);
  CHECK(sa.str() == sb.str());
  auto c = samplePaths(grid, 4, 64, 8, false);
  CHECK(c.dW != a.dW);
  // the first 2 outer paths do not depend on the batch size
  auto d = samplePaths(grid, 2, 64, 7, false);
  for (int i = 0; i < 8; ++i) CHECK(d.b(1, i) == a.b(1, i));
}

TEST_CASE("antithetic pairs cancel exactly") {
  auto p = samplePaths(makeGrid(1.0, 5), 6, 10, 3, true);
  for (int m = 0; m < 10; m += 2)
    for (int i = 0; i < 5; ++i) CHECK(p.w(m, i) + p.w(m + 1, i) == 0.0);
  for (int m = 0; m < 6; m += 2)
    for (int i = 0; i < 5; ++i) CHECK(p.b(m, i) + p.b(m + 1, i) == 0.0);
}

TEST_CASE("increment moments") {
  const int N = 100, M = 100000;
  auto grid = makeGrid(1.0, N);
  auto p = samplePaths(grid, 2, M, 11, false);
  const double dt = grid.dt();
  for (int i = 0; i < N; ++i) {
    double mean = 0.0, sq = 0.0;
    for (int m = 0; m < M; ++m) mean += p.w(m, i);
    mean /= M;
    for (int m = 0; m < M; ++m) sq += (p.w(m, i) - mean) * (p.w(m, i) - mean);
    const double var = sq / (M - 1);
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(dt / M));
    CHECK(var >= 0.008);
    CHECK(var <= 0.012);
  }
}

TEST_CASE("path capacity") {
  CHECK_THROWS_AS(samplePaths(makeGrid(1.0, 1 << 16), 2, 1 << 20, 1, false), Error);
  CHECK_THROWS_AS(samplePaths(makeGrid(1.0, 4), 1, 1, 1, false), Error);
}

TEST_CASE("martingale terminal") {
  const int M = 20000;
  auto grid = makeGrid(1.0, 8);
  auto p = samplePaths(grid, 3, M, 5, false);
  auto sol = solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), BasisSpec{}, p);
  auto rep = mcDiagnostics(sol);
  for (int o = 0; o < 3; ++o) {
    CHECK(std::abs(sol.y0[o]) <= 3.0 * sol.y0InnerSd[o] / std::sqrt(M));
    CHECK(std::abs(sol.coefZ[o][0][0] - 1.0) <= 5.0 * std::sqrt(2.0 / M));
    for (int i = 1; i < 8; ++i) CHECK(sol.coefY[o][i].size() == 3);
  }
  CHECK(rep.varianceY0 <= rep.innerCiHalfWidth * rep.innerCiHalfWidth);
  CHECK(rep.conditionNumbers.size() == 8);
}

TEST_CASE("additive noise integrates the outer path") {
  auto grid = makeGrid(1.0, 16);
  auto p = samplePaths(grid, 400, 50, 9, false);
  auto sol = solveLSMC(builtinDriver("zero", {}, "g_constant", {1.0}), builtinTerminal("constant", {0.0}),
                       BasisSpec{.degree = 1}, p);
  for (int o = 0; o < 400; ++o) {
    double sum = 0.0;
    for (int i = 0; i < 16; ++i) sum += p.b(o, i);
    CHECK(std::abs(sol.y0[o] - sum) <= 1e-8);
  }
  // Var(B_T) = 1; the sample variance of 400 normals has sd sqrt(2/399)
  auto rep = mcDiagnostics(sol);
  CHECK(std::abs(rep.varianceY0 - 1.0) <= 5.0 * std::sqrt(2.0 / 399.0));
}

TEST_CASE("linear driver on a quadratic terminal") {
  const int N = 10, M = 100000;
  auto grid = makeGrid(1.0, N);
  auto p = samplePaths(grid, 4, M, 21, false);
  auto sol = solveLSMC(builtinDriver("f_linear", {1.0, 0.0}), builtinTerminal("w_terminal_sq"), BasisSpec{}, p);
  auto rep = mcDiagnostics(sol);
  const double exact = std::pow(1.0 + grid.dt(), N);
  CHECK(std::abs(rep.meanY0 - exact) <= 3.0 * rep.innerStdError);
}

TEST_CASE("single outer path reports zero variance") {
  auto p = samplePaths(makeGrid(1.0, 4), 1, 100, 1, false);
  auto rep = mcDiagnostics(solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), BasisSpec{}, p));
  CHECK(rep.varianceY0 == 0.0);
  CHECK(rep.outerCiHalfWidth == 0.0);
}

TEST_CASE("preconditions and regression errors") {
  auto p = samplePaths(makeGrid(1.0, 4), 2, 30, 1, false);
  CHECK_THROWS_AS(solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), BasisSpec{}, p), Error);
  BasisSpec bad;
  bad.degree = -1;
  CHECK_THROWS_AS(solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), bad, p), Error);
  // all inner paths identical: the quadratic Gram matrix is rank one
  auto q = samplePaths(makeGrid(1.0, 4), 2, 40, 1, false);
  for (int m = 1; m < 40; ++m)
    for (int i = 0; i < 4; ++i) q.dW[m * 4 + i] = q.dW[i];
  BasisSpec noRidge;
  noRidge.ridge = 0.0;
  try {
    solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), noRidge, q);
    FAIL("expected a regression error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Regression);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
  // with the ridge the degenerate basis still solves
  CHECK_NOTHROW(solveLSMC(builtinDriver("zero", {}), builtinTerminal("w_terminal"), BasisSpec{}, q));
}

TEST_CASE("non-finite targets") {
  auto p = samplePaths(makeGrid(1.0, 4), 2, 100, 1, false);
  DriverSpec d = builtinDriver("zero", {});
  d.f = [](double, double, double) { return std::nan(""); };
  try {
    solveLSMC(d, builtinTerminal("constant", {1.0}), BasisSpec{}, p);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
  }
}

TEST_CASE("binary injection reproduces the tree") {
  const int N = 6;
  auto grid = makeGrid(1.0, N);
  std::vector<std::uint64_t> patterns(1 << N);
  for (std::size_t e = 0; e < patterns.size(); ++e) patterns[e] = e;
  auto paths = binaryPaths(grid, patterns);
  BasisSpec basis;
  basis.kind = BasisSpec::Kind::Indicator;
  basis.includeDriftInZTarget = true;
  const std::vector<std::pair<DriverSpec, TerminalSpec>> cases = {
      {builtinDriver("f_linear", {0.7, -0.3}, "g_sine", {0.5, 0.2}), builtinTerminal("w_terminal")},
      {builtinDriver("f_sqrt_pos", {2.0}, "g_linear", {0.9}), builtinTerminal("w_terminal_sq")},
      {builtinDriver("f_linear", {1.0, 0.0}, "g_constant", {1.0}), builtinTerminal("constant", {1.0})},
  };
  for (const auto& [driver, terminal] : cases) {
    auto tree = solveTree(driver, terminal, grid);
    auto mc = solveLSMC(driver, terminal, basis, paths);
    for (std::size_t e = 0; e < patterns.size(); ++e) CHECK(std::abs(mc.y0[e] - tree.Y[0][e]) <= 1e-8);
  }
}

TEST_CASE("thread count does not change the estimate") {
  auto p = samplePaths(makeGrid(1.0, 6), 8, 500, 3, true);
  auto d = builtinDriver("f_linear", {0.5, 0.2}, "g_linear", {0.3});
  auto t = builtinTerminal("w_terminal_sq");
  auto serial = solveLSMC(d, t, BasisSpec{}, p, Exec::Serial);
  auto par = solveLSMC(d, t, BasisSpec{}, p, Exec::Parallel);
  CHECK(serial.y0 == par.y0);
  CHECK(serial.coefZ == par.coefZ);
}
