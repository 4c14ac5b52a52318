#include "bdsde/envelope.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "bdsde/error.hpp"
#include "bdsde/tree_solver.hpp"

namespace bdsde {

namespace {

constexpr double kMonotoneTol = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double declaredK(const DriverSpec& d) {
  if (d.growthK) return *d.growthK;
  if (d.fLipschitz) return *d.fLipschitz;
  fail(ErrorKind::Precondition, "envelope needs a growth constant K for f");
}

Solution solveWith(const DriverSpec& d, const TerminalSpec& terminal, const TimeGrid& grid,
                   const EnvelopeOptions& opt) {
  if (opt.backend == Backend::Scalar) return solveScalar(d, terminal, grid);
  return solveTree(d, terminal, grid, TreeOptions{opt.exec, 0});
}

double supAbs(const std::vector<std::vector<double>>& field) {
  double m = 0.0;
  for (const auto& row : field)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

struct Bounds {
  Solution U, V;
  ConvGridSpec lattice;
};

Bounds solveBounds(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                   const std::vector<double>& schedule, const EnvelopeOptions& opt) {
  Bounds b;
  b.U = solveWith(withFPart(driver, lowerBoundDriver(driver)), terminal, grid, opt);
  b.V = solveWith(withFPart(driver, upperBoundDriver(driver)), terminal, grid, opt);
  const double B = std::max(b.U.maxAbsY(), b.V.maxAbsY()) + std::max(supAbs(b.U.Z), supAbs(b.V.Z));
  const DriverPart part = fPartOf(driver);
  const int axes = latticeAxes(part);
  double nLattice = 0.0;
  for (double n : schedule)
    if (!(driver.fLipschitz && n >= *driver.fLipschitz)) nLattice = std::max(nLattice, n);
  if (axes > 0 && nLattice > 0.0)
    b.lattice = ConvGridSpec::forTolerance(nLattice, opt.gridTol, 2.0 * (1.0 + B), axes, opt.maxLatticePoints);
  return b;
}

// Nodewise max of a - b, with its position.
struct Gap {
  double value = -std::numeric_limits<double>::infinity();
  int step = -1;
  std::size_t node = 0;
};

Gap maxGap(const Solution& a, const Solution& b) {
  Gap g;
  for (int i = 0; i <= a.steps(); ++i)
    for (std::size_t e = 0; e < a.nodes(i); ++e) {
      const double d = a.Y[i][e] - b.Y[i][e];
      if (d > g.value || std::isnan(d)) {
        g = {std::isnan(d) ? std::numeric_limits<double>::infinity() : d, i, e};
        if (std::isnan(d)) return g;
      }
    }
  return g;
}

EnvelopeSide runSide(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                     const EnvelopeOptions& opt, ConvMode mode) {
  validateDriver(driver);
  if (opt.backend == Backend::Scalar)
    require(driver.gIsZero && terminal.deterministic(), ErrorKind::Precondition,
            "scalar backend needs g = 0 and a constant terminal");
  EnvelopeSide side;
  side.mode = mode;
  side.schedule = envelopeSchedule(driver, grid, opt.schedule);
  Bounds bounds = solveBounds(driver, terminal, grid, side.schedule, opt);
  side.lattice = bounds.lattice;
  const bool sup = mode == ConvMode::Sup;
  side.bound = sup ? bounds.U : bounds.V;
  side.boundS2 = s2Norm(side.bound);
  const double K = declaredK(driver);
  const int axes = latticeAxes(fPartOf(driver));
  const double T = grid.horizon();
  const char* name = sup ? "maximal" : "minimal";

  Solution prev;
  for (std::size_t k = 0; k < side.schedule.size(); ++k) {
    const double n = side.schedule[k];
    IterateRecord rec;
    rec.k = static_cast<int>(k);
    rec.n = n;
    DriverSpec dn;
    double slack = 0.0;
    std::shared_ptr<ConvStats> stats;
    if (driver.fLipschitz && n >= *driver.fLipschitz) {
      // f is already n-Lipschitz, so it is its own sup- and inf-convolution.
      dn = driver;
    } else {
      RegularizedPart rp = regularize(fPartOf(driver), n, mode, side.lattice, opt.exec);
      stats = rp.stats;
      dn = withFPart(driver, rp.part);
      slack = (n + K) * axes * side.lattice.spacing * T * std::exp(K * T);
      side.latticeErrorBound = T * rp.gridErrorBound() * axes;
    }
    Solution sol = solveWith(dn, terminal, grid, opt);
    if (stats) rec.boundaryHits = stats->boundaryHits.load();

    // the bound must stay on its side of every iterate
    const Gap bg = sup ? maxGap(side.bound, sol) : maxGap(sol, side.bound);
    rec.boundGap = bg.value;
    if (bg.value > kMonotoneTol + slack)
      fail(ErrorKind::Consistency, std::string(name) + " iterate n = " + std::to_string(n) +
                                       " crosses its bounding solution by " + std::to_string(bg.value) +
                                       " at step " + std::to_string(bg.step) + ", node " +
                                       std::to_string(bg.node));
    if (k == 0) {
      rec.supDistPrev = kNaN;
      rec.m2DistZPrev = kNaN;
    } else {
      const Gap mg = sup ? maxGap(sol, prev) : maxGap(prev, sol);
      if (mg.value > kMonotoneTol)
        fail(ErrorKind::Consistency, std::string(name) + " iterates not monotone: n = " + std::to_string(n) +
                                         " moves the wrong way by " + std::to_string(mg.value) + " at step " +
                                         std::to_string(mg.step) + ", node " + std::to_string(mg.node));
      rec.supDistPrev = supDistance(sol, prev);
      rec.m2DistZPrev = m2DistanceZ(sol, prev);
    }
    rec.y0Mean = expectationAt(sol, 0).mean;
    rec.s2 = s2Norm(sol);
    spdlog::debug("{} k={} n={} supDistPrev={} Y0mean={} s2={} m2DistZ={} boundaryHits={}", name, k, n,
                  rec.supDistPrev, rec.y0Mean, rec.s2, rec.m2DistZPrev, rec.boundaryHits);
    const bool done = k > 0 && rec.supDistPrev < opt.tol;
    if (opt.keepIterates) rec.field = sol;
    side.log.push_back(std::move(rec));
    side.finalDriver = dn;
    if (!stats) side.latticeErrorBound = 0.0;
    prev = std::move(sol);
    if (done) {
      side.converged = true;
      break;
    }
  }
  side.solution = std::move(prev);
  return side;
}

}  // namespace

std::vector<double> envelopeSchedule(const DriverSpec& driver, const TimeGrid& grid,
                                     const std::vector<double>& requested) {
  const double K = declaredK(driver);
  const double dt = grid.dt();
  if (requested.empty()) {
    std::vector<double> out;
    const double base = std::max(K, 1.0);
    for (int k = 0; k < 8; ++k) {
      const double n = base * std::ldexp(1.0, k);
      if (dt * n > 0.5) break;
      out.push_back(n);
    }
    if (out.empty())
      fail(ErrorKind::Scheme, "dt * n = " + std::to_string(dt * base) +
                                  " > 0.5 already at n = K; refine the grid to N >= " +
                                  std::to_string(static_cast<long long>(std::ceil(2.0 * base * grid.horizon()))));
    return out;
  }
  require(requested.front() >= K, ErrorKind::Precondition,
          "schedule starts at " + std::to_string(requested.front()) + " < K = " + std::to_string(K));
  for (std::size_t k = 0; k < requested.size(); ++k) {
    if (k > 0)
      require(requested[k] > requested[k - 1], ErrorKind::Precondition, "schedule must be strictly increasing");
    if (dt * requested[k] > 0.5)
      fail(ErrorKind::Scheme, "dt * n = " + std::to_string(dt * requested[k]) + " > 0.5 at n = " +
                                  std::to_string(requested[k]) + "; refine the grid to N >= " +
                                  std::to_string(static_cast<long long>(std::ceil(2.0 * requested[k] * grid.horizon()))));
  }
  return requested;
}

EnvelopeSide maximalSolution(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                             const EnvelopeOptions& opt) {
  return runSide(driver, terminal, grid, opt, ConvMode::Sup);
}

EnvelopeSide minimalSolution(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                             const EnvelopeOptions& opt) {
  return runSide(driver, terminal, grid, opt, ConvMode::Inf);
}

EnvelopeResult envelope(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                        const EnvelopeOptions& opt) {
  return {maximalSolution(driver, terminal, grid, opt), minimalSolution(driver, terminal, grid, opt)};
}

SandwichReport sandwichCheck(const Solution& candidate, const EnvelopeResult& env, double tol) {
  const Solution& lo = env.minimal.solution;
  const Solution& hi = env.maximal.solution;
  require(candidate.grid == hi.grid && lo.grid == hi.grid, ErrorKind::InvalidArgument,
          "sandwich check: grids differ");
  require(lo.layout == hi.layout && hi.layout != Layout::Extended, ErrorKind::InvalidArgument,
          "sandwich check: envelope must be on the tree or scalar layout");
  validateShape(candidate);
  const int N = candidate.steps();
  SandwichReport rep;
  auto consider = [&](double v, bool above, int i, std::size_t e) {
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    if (v > rep.worstViolation) {
      rep.worstViolation = v;
      rep.step = i;
      rep.node = e;
      rep.aboveMax = above;
    }
  };
  for (int i = 0; i <= N; ++i) {
    for (std::size_t e = 0; e < lo.nodes(i); ++e) rep.bandInversion = std::max(rep.bandInversion, lo.Y[i][e] - hi.Y[i][e]);
    if (candidate.layout == Layout::Scalar) {
      for (std::size_t e = 0; e < hi.nodes(i); ++e) {
        consider(candidate.Y[i][0] - hi.Y[i][e], true, i, e);
        consider(lo.Y[i][e] - candidate.Y[i][0], false, i, e);
      }
      continue;
    }
    for (std::size_t e = 0; e < candidate.nodes(i); ++e) {
      const std::size_t m = hi.layout == Layout::Scalar ? 0 : treeIndex(candidate.layout, N, e);
      consider(candidate.Y[i][e] - hi.Y[i][m], true, i, e);
      consider(lo.Y[i][m] - candidate.Y[i][e], false, i, e);
    }
  }
  rep.pass = rep.worstViolation <= tol && rep.bandInversion <= tol;
  return rep;
}

void writeEnvelopeCsv(const EnvelopeSide& side, std::ostream& out) {
  out << "k,n_k,supDistPrev,Y0_mean,converged\n";
  for (const auto& r : side.log) {
    const bool last = &r == &side.log.back();
    out << r.k << ',' << fmt17(r.n) << ',' << (std::isnan(r.supDistPrev) ? "" : fmt17(r.supDistPrev)) << ','
        << fmt17(r.y0Mean) << ',' << (last && side.converged ? 1 : 0) << '\n';
  }
}

}  // namespace bdsde
