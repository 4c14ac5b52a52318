#include "bdsde/tree_solver.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "bdsde/error.hpp"

namespace bdsde {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string nodeBits(int N, int i, std::size_t e) {
  std::ostringstream os;
  os << "step " << i << ", W history (";
  for (int k = 0; k < i; ++k) os << (((e >> k) & 1U) ? '+' : '-');
  os << "), B future (";
  for (int k = i; k < N; ++k) os << (((e >> k) & 1U) ? '+' : '-');
  os << ')';
  return os.str();
}

std::vector<std::int64_t> visitOrder(std::size_t n, std::uint64_t seed) {
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (seed != 0) std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
  return order;
}

}  // namespace

double stabilityIndicator(const DriverSpec& driver, const TimeGrid& grid) {
  if (!driver.fLipschitz) return kNaN;
  return grid.dt() * *driver.fLipschitz +
         grid.sqrtDt() * (driver.gLipY + std::sqrt(driver.gLipZsq));
}

void backwardSweep(Solution& sol, const DriverSpec& driver, int iEnd, const TreeOptions& opt) {
  require(sol.layout == Layout::Tree, ErrorKind::InvalidArgument, "backward sweep needs the tree layout");
  const TimeGrid& g = sol.grid;
  const int N = g.steps();
  require(iEnd >= 0 && iEnd <= N, ErrorKind::InvalidArgument, "sweep end out of range");
  const std::size_t n = std::size_t{1} << N;
  const double dt = g.dt(), h = g.sqrtDt();
  const bool par = opt.exec == Exec::Parallel;
  const auto order = visitOrder(n, opt.permutationSeed);
  const auto ni = static_cast<std::int64_t>(n);
  std::vector<double> P(n), G(n);

  for (int i = iEnd - 1; i >= 0; --i) {
    const double t1 = g.t(i + 1);
    const auto& Y1 = sol.Y[i + 1];
    const auto& Z1 = sol.Z[i + 1];
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t k = 0; k < ni; ++k) {
      const auto e = static_cast<std::size_t>(order[k]);
      P[e] = Y1[e] + dt * driver.f(t1, Y1[e], Z1[e]);
      G[e] = driver.g(t1, Y1[e], Z1[e]);
    }
    for (std::size_t e = 0; e < n; ++e)
      if (!std::isfinite(P[e]) || !std::isfinite(G[e]))
        fail(ErrorKind::Numeric, "non-finite driver value at " + nodeBits(N, i + 1, e));

    const std::size_t bit = std::size_t{1} << i;
    auto& Y0 = sol.Y[i];
    auto& Z0 = sol.Z[i];
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t k = 0; k < ni; ++k) {
      const auto e = static_cast<std::size_t>(order[k]);
      const double r = (e & bit) ? h : -h;
      const std::size_t up = e | bit, down = e & ~bit;
      Y0[e] = 0.5 * (P[up] + P[down] + (G[up] + G[down]) * r);
      Z0[e] = (P[up] - P[down] + (G[up] - G[down]) * r) / (2.0 * h);
    }
  }
}

Solution solveTree(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                   const TreeOptions& opt) {
  require(grid.steps() <= kMaxTreeSteps, ErrorKind::Capacity,
          "tree solver needs N <= " + std::to_string(kMaxTreeSteps) + ", got " +
              std::to_string(grid.steps()));
  Solution sol = makeSolution(grid, Layout::Tree);
  const int N = grid.steps();
  const std::size_t n = std::size_t{1} << N;
  for (std::size_t e = 0; e < n; ++e) sol.Y[N][e] = terminalAt(terminal, grid, e);
  const double guard = stabilityIndicator(driver, grid);
  if (guard > 0.5)
    sol.warnings.push_back("stability guard: dt*LipF + sqrt(dt)*(C + sqrt(alpha)) = " +
                           std::to_string(guard) + " > 0.5; comparison claims do not apply");
  backwardSweep(sol, driver, N, opt);
  return sol;
}

Solution solveScalar(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid) {
  require(driver.gIsZero, ErrorKind::Precondition, "scalar backend needs g = 0");
  require(terminal.deterministic(), ErrorKind::Precondition, "scalar backend needs a constant terminal");
  Solution sol = makeSolution(grid, Layout::Scalar);
  const int N = grid.steps();
  const double dt = grid.dt();
  double y = *terminal.constantValue;
  sol.Y[N][0] = y;
  for (int i = N - 1; i >= 0; --i) {
    y = y + dt * driver.f(grid.t(i + 1), y, 0.0);
    if (!std::isfinite(y)) fail(ErrorKind::Numeric, "non-finite value at step " + std::to_string(i));
    sol.Y[i][0] = y;
  }
  return sol;
}

double solveImplicit(const std::function<double(double)>& phi, double target, double guess) {
  auto F = [&](double y) { return phi(y) - target; };
  double fg = F(guess);
  if (fg == 0.0) return guess;
  if (std::isnan(fg)) return kNaN;
  double width = 1e-3 * (1.0 + std::abs(guess));
  double a = guess, b = guess, fa = fg, fb = fg;
  bool found = false;
  for (int k = 0; k < 80 && !found; ++k, width *= 2.0) {
    const double lo = guess - width, hi = guess + width;
    const double flo = F(lo), fhi = F(hi);
    if (!std::isnan(flo) && (flo < 0.0) != (fg < 0.0)) {
      a = lo, fa = flo, b = guess, fb = fg;
      found = true;
    } else if (!std::isnan(fhi) && (fhi < 0.0) != (fg < 0.0)) {
      a = guess, fa = fg, b = hi, fb = fhi;
      found = true;
    }
  }
  if (!found) return kNaN;
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  std::uintmax_t iters = 200;
  auto [lo, hi] = boost::math::tools::toms748_solve(F, a, b, fa, fb,
                                                    boost::math::tools::eps_tolerance<double>(53), iters);
  return std::abs(F(lo)) <= std::abs(F(hi)) ? lo : hi;
}

ForwardSegment solveForwardSwapped(const DriverSpec& driver, const InverseFn& hInv,
                                   const std::vector<double>& eta, const TimeGrid& grid, int i0,
                                   const ForwardOptions& opt) {
  const int N = grid.steps();
  require(i0 >= 0 && i0 <= N, ErrorKind::InvalidArgument, "i0 out of range");
  require(N <= kMaxTreeSteps, ErrorKind::Capacity, "forward segment needs N <= " + std::to_string(kMaxTreeSteps));
  const std::size_t n = std::size_t{1} << N;
  require(eta.size() == n, ErrorKind::InvalidArgument, "eta must have 2^N nodes");
  require(static_cast<bool>(hInv), ErrorKind::Inversion, "no inverse of g supplied");
  if (driver.gIsZero)
    fail(ErrorKind::Inversion, "g = 0 has no inverse in z; use the deterministic glue");

  ForwardSegment seg;
  seg.i0 = i0;
  seg.field = makeSolution(grid, Layout::Tree);
  seg.gImage.assign(N + 1, {});
  seg.field.Y[i0] = eta;
  if (!opt.zStart.empty()) {
    require(opt.zStart.size() == n, ErrorKind::InvalidArgument, "zStart must have 2^N nodes");
    seg.field.Z[i0] = opt.zStart;
  }
  const double dt = grid.dt(), h = grid.sqrtDt();
  const bool par = opt.exec == Exec::Parallel;
  const auto half = static_cast<std::int64_t>(n / 2);
  double worstInverse = 0.0;

  for (int j = i0; j < N; ++j) {
    const double t1 = grid.t(j + 1);
    const std::size_t bit = std::size_t{1} << j;
    const auto& Yj = seg.field.Y[j];
    const auto& Zj = seg.field.Z[j];
    auto& Y1 = seg.field.Y[j + 1];
    auto& Z1 = seg.field.Z[j + 1];
    auto& G1 = seg.gImage[j + 1];
    G1.assign(n, 0.0);
    std::vector<double> invErr(n, 0.0);
#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t k = 0; k < half; ++k) {
      // k enumerates the nodes with bit j clear; the pair is (down, up).
      const auto low = static_cast<std::size_t>(k) & (bit - 1);
      const std::size_t down = ((static_cast<std::size_t>(k) >> j) << (j + 1)) | low;
      const std::size_t up = down | bit;
      const double yP = Yj[up], yM = Yj[down], zP = Zj[up], zM = Zj[down];
      const double gPlus = 0.5 * ((yP - yM) / h + (zP - zM));
      const double gMinus = gPlus - (zP - zM);
      const double pPlus = yP + zP * h - gPlus * h;
      const double pMinus = yP - zP * h - gMinus * h;
      for (int s = 0; s < 2; ++s) {
        const double G = s ? gPlus : gMinus, P = s ? pPlus : pMinus;
        const std::size_t next = s ? up : down;
        if (!std::isfinite(G) || !std::isfinite(P)) {
          Y1[next] = Z1[next] = G1[next] = kNaN;
          continue;
        }
        auto phi = [&](double y) { return y + dt * driver.f(t1, y, hInv(t1, y, G)); };
        const double y = solveImplicit(phi, P, P);
        const double z = std::isnan(y) ? kNaN : hInv(t1, y, G);
        const double back = std::isnan(z) ? kNaN : driver.g(t1, y, z);
        invErr[next] = std::isnan(back) ? std::numeric_limits<double>::infinity() : std::abs(back - G);
        Y1[next] = y;
        Z1[next] = z;
        G1[next] = G;
      }
    }
    for (std::size_t e = 0; e < n; ++e) {
      const bool bad = !std::isfinite(Y1[e]) || !(invErr[e] <= opt.inverseTol);
      if (std::isfinite(invErr[e])) worstInverse = std::max(worstInverse, invErr[e]);
      if (!bad) continue;
      const bool upstream = !std::isfinite(G1[e]);
      if (opt.strict) {
        std::ostringstream os;
        os << "forward segment failed at " << nodeBits(N, j + 1, e) << ": g-image " << G1[e]
           << ", inverse residual " << invErr[e] << (upstream ? " (non-finite input)" : "");
        fail(ErrorKind::Inversion, os.str());
      }
      Y1[e] = Z1[e] = kNaN;
      ++seg.failedNodes;
    }
  }
  seg.inverseResidual = worstInverse;

  seg.sensitivity.assign(N, 0.0);
  for (int j = i0; j <= N; ++j)
    for (int k = 0; k < N; ++k) {
      const std::size_t bit = std::size_t{1} << k;
      double m = 0.0;
      for (std::size_t e = 0; e < n; ++e)
        if (!(e & bit)) {
          const double d = std::abs(seg.field.Y[j][e | bit] - seg.field.Y[j][e]);
          if (std::isfinite(d)) m = std::max(m, d);
        }
      seg.sensitivity[k] = std::max(seg.sensitivity[k], m);
    }
  return seg;
}

double forwardResidual(const ForwardSegment& seg, const DriverSpec& driver) {
  const Solution& sol = seg.field;
  const int N = sol.grid.steps();
  double worst = 0.0;
  for (int j = seg.i0; j < N; ++j)
    for (std::size_t e = 0; e < sol.nodes(j); ++e)
      for (int s = 0; s < 2; ++s) {
        const double r = std::abs(stepResidual(sol, driver, j, e, s));
        worst = std::max(worst, std::isnan(r) ? std::numeric_limits<double>::infinity() : r);
      }
  return worst;
}

}  // namespace bdsde
