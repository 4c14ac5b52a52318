#include "bdsde/kneser.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "bdsde/error.hpp"

namespace bdsde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int8_t kRunning = std::numeric_limits<std::int8_t>::max();

double absOrInf(double v) { return std::isnan(v) ? kInf : std::abs(v); }

double envY(const Solution& s, int j, std::size_t tree) { return s.Y[j][s.layout == Layout::Scalar ? 0 : tree]; }
double envZ(const Solution& s, int j, std::size_t tree) { return s.Z[j][s.layout == Layout::Scalar ? 0 : tree]; }

}  // namespace

InverseReport validateInverse(const ScalarFn& g, const InverseFn& hInv, int probeCount, std::uint64_t seed,
                              double tol) {
  require(probeCount >= 1, ErrorKind::InvalidArgument, "probeCount must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(0.0, 1.0), uv(-10.0, 10.0);
  InverseReport rep;
  rep.probes = probeCount;
  double worst = -1.0;
  for (int k = 0; k < probeCount; ++k) {
    const double t = ut(rng), y = uv(rng), z = uv(rng), z2 = uv(rng);
    const double zt = g(t, y, z), zt2 = g(t, y, z2);
    const double h1 = hInv(t, y, zt), h2 = hInv(t, y, zt2);
    const double fr = absOrInf(g(t, y, h1) - zt);
    const double br = absOrInf(h1 - z);
    rep.forwardResidual = std::max(rep.forwardResidual, fr);
    rep.backwardResidual = std::max(rep.backwardResidual, br);
    if (std::max(fr, br) > worst) {
      worst = std::max(fr, br);
      rep.witnessT = t, rep.witnessY = y, rep.witnessZ = zt;
    }
    if (std::abs(zt - zt2) > 1e-6) {
      const double slope = (h1 - h2) / (zt - zt2);
      if (std::isfinite(slope)) rep.hLipZsq = std::max(rep.hLipZsq, slope * slope);
    }
  }
  rep.hLipFlag = rep.hLipZsq >= 1.0;
  rep.pass = rep.forwardResidual <= tol && rep.backwardResidual <= tol;
  return rep;
}

InvertiblePair makeInvertiblePair(const DriverSpec& driver, InverseFn hInv, std::optional<double> hLipZsq,
                                  int probeCount, std::uint64_t seed) {
  require(static_cast<bool>(hInv), ErrorKind::Inversion, "no inverse supplied");
  InvertiblePair pair;
  pair.g = driver.g;
  pair.hInv = std::move(hInv);
  pair.report = validateInverse(pair.g, pair.hInv, probeCount, seed);
  if (!pair.report.pass) {
    std::ostringstream os;
    os << "h is not an inverse of g in z: residual " << std::max(pair.report.forwardResidual, pair.report.backwardResidual)
       << " at t = " << pair.report.witnessT << ", y = " << pair.report.witnessY << ", ztilde = " << pair.report.witnessZ;
    fail(ErrorKind::Inversion, os.str());
  }
  pair.hLipZsq = hLipZsq.value_or(pair.report.hLipZsq);
  pair.report.hLipFlag = pair.report.hLipFlag || pair.hLipZsq >= 1.0;
  return pair;
}

InvertiblePair builtinInverse(const DriverSpec& driver) {
  const auto& ref = driver.gRef;
  if (ref.name == "g_linear" || ref.name == "g_sine") {
    const double beta = ref.params.at(0);
    const double amp = ref.name == "g_sine" ? ref.params.at(1) : 0.0;
    require(beta != 0.0, ErrorKind::Inversion, ref.str() + " is constant in z and has no inverse");
    return makeInvertiblePair(
        driver, [beta, amp](double, double y, double zt) { return (zt - amp * std::sin(y)) / beta; },
        1.0 / (beta * beta));
  }
  fail(ErrorKind::Inversion, "no closed-form inverse for " + ref.str());
}

InverseFn bisectionInverse(ScalarFn g, double zLo, double zHi) {
  return [g = std::move(g), zLo, zHi](double t, double y, double zt) {
    auto F = [&](double z) { return g(t, y, z) - zt; };
    const double fl = F(zLo), fh = F(zHi);
    if (fl == 0.0) return zLo;
    if (fh == 0.0) return zHi;
    if (!((fl < 0.0) != (fh < 0.0))) return std::numeric_limits<double>::quiet_NaN();
    auto [a, b] = boost::math::tools::bisect(F, zLo, zHi, boost::math::tools::eps_tolerance<double>(53));
    return std::abs(F(a)) <= std::abs(F(b)) ? a : b;
  };
}

std::vector<double> interpolateTarget(const EnvelopeResult& env, int i0, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidArgument,
          "lambda must lie in [0, 1], got " + std::to_string(lambda));
  const Solution& lo = env.minimal.solution;
  const Solution& hi = env.maximal.solution;
  require(i0 >= 0 && i0 <= hi.steps(), ErrorKind::InvalidArgument, "i0 out of range");
  std::vector<double> eta(hi.nodes(i0));
  for (std::size_t e = 0; e < eta.size(); ++e) eta[e] = lambda * lo.Y[i0][e] + (1.0 - lambda) * hi.Y[i0][e];
  return eta;
}

GluedSolution glueSolution(const DriverSpec& driver, const InvertiblePair& pair, const TerminalSpec& terminal,
                           int i0, const std::vector<double>& eta, const EnvelopeResult& env,
                           const GlueOptions& opt) {
  const Solution& hi = env.maximal.solution;
  const Solution& lo = env.minimal.solution;
  const TimeGrid grid = hi.grid;
  const int N = grid.steps();
  require(i0 >= 0 && i0 < N, ErrorKind::InvalidArgument, "glue needs 0 <= i0 < N");
  require(hi.layout != Layout::Extended && lo.layout == hi.layout, ErrorKind::InvalidArgument,
          "envelope must be on the tree or scalar layout");
  require(pair.report.pass, ErrorKind::Inversion, "inverse pair did not validate");
  const std::size_t nTree = std::size_t{1} << N;
  require(eta.size() == nTree || eta.size() == 1, ErrorKind::InvalidArgument, "eta must have 1 or 2^N nodes");
  const std::vector<double> etaFull = eta.size() == nTree ? eta : std::vector<double>(nTree, eta[0]);

  GluedSolution out;
  out.lambda = opt.lambda;
  out.i0 = i0;
  out.field = makeSolution(grid, Layout::Extended, i0);
  out.hLipFlag = pair.report.hLipFlag;
  const double dt = grid.dt();
  out.snapTol = std::isnan(opt.snapTol) ? dt * dt * (1.0 + hi.maxAbsY()) : opt.snapTol;
  const double snap = out.snapTol;

  const double allowance = env.maximal.latticeErrorBound + env.minimal.latticeErrorBound;
  for (std::size_t e = 0; e < nTree; ++e) {
    const double l = envY(lo, i0, e), h = envY(hi, i0, e), v = etaFull[e];
    const double slack = allowance + 1e-12 * (1.0 + std::abs(v));
    if (!(v >= l - slack && v <= h + slack))
      fail(ErrorKind::Precondition, "eta = " + std::to_string(v) + " outside the band [" + std::to_string(l) + ", " +
                                        std::to_string(h) + "] at node " + std::to_string(e) + " of step " +
                                        std::to_string(i0));
  }

  ForwardOptions fo;
  fo.exec = opt.exec;
  fo.strict = false;
  fo.zStart = opt.zStart;
  out.segment2 = solveForwardSwapped(driver, pair.hInv, etaFull, grid, i0, fo);
  const Solution& fwd = out.segment2.field;

  auto usedNaN = [&](int j, std::size_t tree) {
    std::ostringstream os;
    os << "forward segment value needed at step " << j << ", node " << tree
       << " is not defined (inverse or implicit solve failed there)";
    fail(ErrorKind::Inversion, os.str());
  };

  // Exit state per node: tau (kRunning while inside the band) and side.
  std::vector<std::vector<std::int8_t>> tau(N + 1);
  std::vector<std::vector<std::uint8_t>> side(N + 1);
  auto exitTest = [&](int j, std::size_t e, std::int8_t& t, std::uint8_t& s) {
    const std::size_t tn = treeIndex(Layout::Extended, N, e);
    const double y = fwd.Y[j][tn];
    if (std::isnan(y)) usedNaN(j, tn);
    const double l = envY(lo, j, tn), h = envY(hi, j, tn);
    if (j < N && y > l + snap && y < h - snap) return;
    t = static_cast<std::int8_t>(j);
    s = y >= h - snap ? 1 : 0;
    out.exitOvershoot = std::max(out.exitOvershoot, s ? (y - h) - snap : (l - y) - snap);
  };
  tau[i0].assign(nTree, kRunning);
  side[i0].assign(nTree, 0);
  for (std::size_t e = 0; e < nTree; ++e) exitTest(i0, e, tau[i0][e], side[i0][e]);
  for (int j = i0; j < N; ++j) {
    const std::size_t n1 = layoutNodes(Layout::Extended, N, i0, j + 1);
    tau[j + 1].assign(n1, kRunning);
    side[j + 1].assign(n1, 0);
    for (std::size_t e = 0; e < tau[j].size(); ++e)
      for (int s = 0; s < 2; ++s) {
        const std::size_t c = successor(Layout::Extended, N, i0, j, e, s);
        if (tau[j][e] != kRunning) {
          tau[j + 1][c] = tau[j][e];
          side[j + 1][c] = side[j][e];
        } else {
          exitTest(j + 1, c, tau[j + 1][c], side[j + 1][c]);
        }
      }
  }
  out.exitOvershoot = std::max(out.exitOvershoot, 0.0);

  // Assemble steps i0..N.
  for (int j = i0; j <= N; ++j)
    for (std::size_t e = 0; e < tau[j].size(); ++e) {
      const std::size_t tn = treeIndex(Layout::Extended, N, e);
      const int t = tau[j][e];
      const Solution& tail = side[j][e] ? hi : lo;
      double y, z;
      if (j == N) {
        y = envY(tail, N, tn);
        z = 0.0;
      } else if (t > j) {
        y = fwd.Y[j][tn];
        z = fwd.Z[j][tn];
      } else if (t == j) {
        y = fwd.Y[j][tn];
        z = j > i0 ? fwd.Z[j][tn] : envZ(tail, j, tn);
      } else {
        y = envY(tail, j, tn);
        z = envZ(tail, j, tn);
      }
      if (std::isnan(y) || std::isnan(z)) usedNaN(j, tn);
      out.field.Y[j][e] = y;
      out.field.Z[j][e] = z;
    }

  // Backward segment from (eta, Z at i0).
  out.segment1 = makeSolution(grid, Layout::Tree);
  out.segment1.Y[i0] = etaFull;
  out.segment1.Z[i0] = out.field.Z[i0];
  backwardSweep(out.segment1, driver, i0, TreeOptions{opt.exec, 0});
  for (int i = 0; i < i0; ++i) {
    out.field.Y[i] = out.segment1.Y[i];
    out.field.Z[i] = out.segment1.Z[i];
  }

  // Residual classes.
  for (int j = 0; j < N; ++j) {
    const auto count = static_cast<std::int64_t>(out.field.nodes(j));
    double offSplice = 0.0, tailRes = 0.0, gap = 0.0, splice = 0.0;
    const bool par = opt.exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par) reduction(max : offSplice, tailRes, gap, splice)
    for (std::int64_t k = 0; k < count; ++k) {
      const auto e = static_cast<std::size_t>(k);
      for (int s = 0; s < 2; ++s) {
        const double r = absOrInf(stepResidual(out.field, driver, j, e, s));
        if (j < i0) {
          offSplice = std::max(offSplice, r);
          continue;
        }
        const int te = tau[j][e];
        if (te < j) {
          const DriverSpec& dn = side[j][e] ? env.maximal.finalDriver : env.minimal.finalDriver;
          const double rt = absOrInf(stepResidual(out.field, dn, j, e, s));
          tailRes = std::max(tailRes, rt);
          gap = std::max(gap, std::abs(r - rt));
        } else if (te == j) {
          splice = std::max(splice, r);
        } else {
          const std::size_t c = successor(Layout::Extended, N, i0, j, e, s);
          if (j + 1 == N && tau[j + 1][c] == N)
            splice = std::max(splice, r);
          else
            offSplice = std::max(offSplice, r);
        }
      }
    }
    out.offSpliceResidual = std::max(out.offSpliceResidual, offSplice);
    out.tailResidual = std::max(out.tailResidual, tailRes);
    out.tailDriverGap = std::max(out.tailDriverGap, gap);
    out.spliceMismatch = std::max(out.spliceMismatch, splice);
  }
  const double term = residualReport(out.field, driver, terminal).terminalMismatch;
  out.spliceMismatch = std::max(out.spliceMismatch, term);

  out.tauIndex.assign(tau[N].begin(), tau[N].end());
  out.tailMax = side[N];
  double sum = 0.0;
  for (int t : out.tauIndex) sum += grid.t(t);
  out.tauMean = sum / static_cast<double>(out.tauIndex.size());
  return out;
}

Solution DeterministicGlue::asSolution(const TimeGrid& grid) const {
  Solution sol = makeSolution(grid, Layout::Scalar);
  for (int i = 0; i <= grid.steps(); ++i) sol.Y[i][0] = y.at(i);
  return sol;
}

DeterministicGlue glueDeterministic(const DriverSpec& driver, int i0, double eta, const EnvelopeResult& env,
                                    const GlueOptions& opt) {
  const Solution& hi = env.maximal.solution;
  const Solution& lo = env.minimal.solution;
  require(hi.layout == Layout::Scalar && lo.layout == Layout::Scalar, ErrorKind::InvalidArgument,
          "deterministic glue needs a scalar envelope");
  require(driver.gIsZero, ErrorKind::Precondition, "deterministic glue needs g = 0");
  const TimeGrid grid = hi.grid;
  const int N = grid.steps();
  require(i0 >= 0 && i0 < N, ErrorKind::InvalidArgument, "glue needs 0 <= i0 < N");
  const double allowance = env.maximal.latticeErrorBound + env.minimal.latticeErrorBound;
  const double slack = allowance + 1e-12 * (1.0 + std::abs(eta));
  if (!(eta >= lo.Y[i0][0] - slack && eta <= hi.Y[i0][0] + slack))
    fail(ErrorKind::Precondition, "eta = " + std::to_string(eta) + " outside the band [" +
                                      std::to_string(lo.Y[i0][0]) + ", " + std::to_string(hi.Y[i0][0]) + "]");
  const double dt = grid.dt();
  DeterministicGlue out;
  out.lambda = opt.lambda;
  out.i0 = i0;
  out.snapTol = std::isnan(opt.snapTol) ? dt * dt * (1.0 + hi.maxAbsY()) : opt.snapTol;
  const double snap = out.snapTol;
  out.y.assign(N + 1, 0.0);
  out.y[i0] = eta;
  for (int i = i0 - 1; i >= 0; --i) {
    out.y[i] = out.y[i + 1] + dt * driver.f(grid.t(i + 1), out.y[i + 1], 0.0);
    if (!std::isfinite(out.y[i])) fail(ErrorKind::Numeric, "non-finite value at step " + std::to_string(i));
  }

  int tau = N;
  for (int j = i0; j <= N; ++j) {
    const double v = out.y[j], l = lo.Y[j][0], h = hi.Y[j][0];
    if (j == N || !(v > l + snap && v < h - snap)) {
      tau = j;
      out.tailMax = v >= h - snap;
      out.exitOvershoot = std::max(0.0, out.tailMax ? (v - h) - snap : (l - v) - snap);
      break;
    }
    const double t1 = grid.t(j + 1);
    const double next = solveImplicit([&](double y) { return y + dt * driver.f(t1, y, 0.0); }, v, v);
    if (std::isnan(next)) fail(ErrorKind::Numeric, "implicit forward step failed at step " + std::to_string(j));
    out.y[j + 1] = next;
  }
  out.tauIndex = tau;
  const Solution& tail = out.tailMax ? hi : lo;
  for (int j = tau + 1; j <= N; ++j) out.y[j] = tail.Y[j][0];
  if (tau == N) out.y[N] = tail.Y[N][0];

  const DriverSpec& dn = out.tailMax ? env.maximal.finalDriver : env.minimal.finalDriver;
  for (int j = 0; j < N; ++j) {
    const double t1 = grid.t(j + 1);
    const double r = absOrInf(out.y[j] - out.y[j + 1] - dt * driver.f(t1, out.y[j + 1], 0.0));
    const bool splice = j == tau || (tau == N && j == N - 1);
    if (j > tau) {
      const double rt = absOrInf(out.y[j] - out.y[j + 1] - dt * dn.f(t1, out.y[j + 1], 0.0));
      out.tailResidual = std::max(out.tailResidual, rt);
      out.tailDriverGap = std::max(out.tailDriverGap, std::abs(r - rt));
    } else if (splice) {
      out.spliceMismatch = std::max(out.spliceMismatch, r);
    } else {
      out.offSpliceResidual = std::max(out.offSpliceResidual, r);
    }
  }
  return out;
}

ContinuumReport continuumSample(const ContinuumCase& spec, const std::vector<double>& lambdas) {
  require(!lambdas.empty(), ErrorKind::InvalidArgument, "no lambdas given");
  for (std::size_t a = 0; a < lambdas.size(); ++a) {
    require(lambdas[a] >= 0.0 && lambdas[a] <= 1.0, ErrorKind::InvalidArgument, "lambda outside [0, 1]");
    for (std::size_t b = 0; b < a; ++b)
      require(lambdas[a] != lambdas[b], ErrorKind::InvalidArgument, "lambdas must be distinct");
  }
  const bool scalar = spec.envelope.backend == Backend::Scalar;
  if (!scalar) require(spec.inverse.has_value(), ErrorKind::Inversion, "tree glue needs an inverse of g");
  ContinuumReport rep;
  rep.envelope = envelope(spec.driver, spec.terminal, spec.grid, spec.envelope);
  const double dt = spec.grid.dt();
  rep.distinctTol = 10.0 * dt;
  for (double lambda : lambdas) {
    GlueOptions go = spec.glue;
    go.lambda = lambda;
    const auto eta = interpolateTarget(rep.envelope, spec.i0, lambda);
    ContinuumRow row;
    row.lambda = lambda;
    Solution sol;
    if (scalar) {
      auto g = glueDeterministic(spec.driver, spec.i0, eta[0], rep.envelope, go);
      sol = g.asSolution(spec.grid);
      row.tauMean = spec.grid.t(g.tauIndex);
      row.residualOffSplice = g.offSpliceResidual;
      row.spliceMismatch = g.spliceMismatch;
    } else {
      auto g = glueSolution(spec.driver, *spec.inverse, spec.terminal, spec.i0, eta, rep.envelope, go);
      sol = std::move(g.field);
      row.tauMean = g.tauMean;
      row.residualOffSplice = g.offSpliceResidual;
      row.spliceMismatch = g.spliceMismatch;
    }
    row.etaExact = sol.Y[spec.i0] == eta;
    row.y0 = expectationAt(sol, 0).mean;
    const auto sw = sandwichCheck(sol, rep.envelope, rep.distinctTol);
    row.sandwichPass = sw.pass;
    row.sandwichViolation = sw.worstViolation;
    rep.rows.push_back(row);
    rep.solutions.push_back(std::move(sol));
  }
  const std::size_t m = rep.solutions.size();
  rep.distance.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const double d = supDistance(rep.solutions[a], rep.solutions[b]);
      rep.distance[a][b] = rep.distance[b][a] = d;
      if (d > rep.distinctTol) ++rep.distinctPairs;
    }
  return rep;
}

void writeContinuumCsv(const ContinuumReport& rep, std::ostream& out) {
  out << "lambda,Y0,tauMean,residualOffSplice,spliceMismatch,sandwichPass\n";
  for (const auto& r : rep.rows)
    out << fmt17(r.lambda) << ',' << fmt17(r.y0) << ',' << fmt17(r.tauMean) << ',' << fmt17(r.residualOffSplice)
        << ',' << fmt17(r.spliceMismatch) << ',' << (r.sandwichPass ? 1 : 0) << '\n';
}

}  // namespace bdsde
