#include "bdsde/mc_solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "bdsde/error.hpp"

namespace bdsde {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// (0, 1], never 0 so the logarithm is finite.
double unitOpen(std::uint64_t h) { return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53; }

constexpr std::uint64_t kStreamB = 1, kStreamW = 2;

}  // namespace

double counterNormal(std::uint64_t seed, std::uint64_t stream, std::uint64_t path, std::uint64_t step,
                     std::uint64_t dim) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ stream);
  h = splitmix(h ^ path);
  h = splitmix(h ^ step);
  h = splitmix(h ^ dim);
  const double u1 = unitOpen(h), u2 = unitOpen(splitmix(h ^ 0x5bd1e995ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PathBatch samplePaths(const TimeGrid& grid, int outer, int inner, std::uint64_t seed, bool antithetic,
                      int dimD, int dimL, Exec exec) {
  require(outer >= 1 && inner >= 2, ErrorKind::InvalidArgument, "need outer >= 1 and inner >= 2 paths");
  require(dimD == 1 && dimL == 1, ErrorKind::InvalidArgument, "only d = l = 1 is supported");
  const int N = grid.steps();
  const double bytes = 8.0 * N * (static_cast<double>(outer) + inner);
  require(bytes <= static_cast<double>(kPathBytesCap), ErrorKind::Capacity,
          "path batch needs " + std::to_string(bytes) + " bytes, cap is " + std::to_string(kPathBytesCap));
  PathBatch batch;
  batch.grid = grid;
  batch.outer = outer;
  batch.inner = inner;
  batch.seed = seed;
  batch.antithetic = antithetic;
  batch.dB.resize(static_cast<std::size_t>(outer) * N);
  batch.dW.resize(static_cast<std::size_t>(inner) * N);
  const double h = grid.sqrtDt();
  const bool par = exec == Exec::Parallel;
  auto fill = [&](std::vector<double>& out, int count, std::uint64_t stream) {
#pragma omp parallel for schedule(static) if (par)
    for (int p = 0; p < count; ++p) {
      const bool mirror = antithetic && (p % 2 == 1);
      const int src = mirror ? p - 1 : p;
      for (int i = 0; i < N; ++i) {
        const double z = h * counterNormal(seed, stream, static_cast<std::uint64_t>(src), static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(p) * N + i] = mirror ? -z : z;
      }
    }
  };
  fill(batch.dB, outer, kStreamB);
  fill(batch.dW, inner, kStreamW);
  return batch;
}

PathBatch binaryPaths(const TimeGrid& grid, const std::vector<std::uint64_t>& bPatterns) {
  const int N = grid.steps();
  require(N <= 20, ErrorKind::Capacity, "binary injection enumerates 2^N paths; N <= 20");
  require(!bPatterns.empty(), ErrorKind::InvalidArgument, "need at least one B pattern");
  PathBatch batch;
  batch.grid = grid;
  batch.outer = static_cast<int>(bPatterns.size());
  batch.inner = 1 << N;
  batch.binary = true;
  const double h = grid.sqrtDt();
  batch.dB.resize(static_cast<std::size_t>(batch.outer) * N);
  batch.dW.resize(static_cast<std::size_t>(batch.inner) * N);
  for (int p = 0; p < batch.outer; ++p)
    for (int i = 0; i < N; ++i) batch.dB[static_cast<std::size_t>(p) * N + i] = ((bPatterns[p] >> i) & 1U) ? h : -h;
  for (int m = 0; m < batch.inner; ++m)
    for (int i = 0; i < N; ++i) batch.dW[static_cast<std::size_t>(m) * N + i] = ((m >> i) & 1) ? h : -h;
  return batch;
}

void writeBinary(const PathBatch& batch, std::ostream& out) {
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write("BDSDEPTH", 8);
  put(std::uint32_t{1});
  put(static_cast<std::int32_t>(batch.grid.steps()));
  put(batch.grid.horizon());
  put(static_cast<std::int32_t>(batch.outer));
  put(static_cast<std::int32_t>(batch.inner));
  put(batch.seed);
  put(static_cast<std::uint8_t>(batch.antithetic));
  put(static_cast<std::uint8_t>(batch.binary));
  out.write(reinterpret_cast<const char*>(batch.dB.data()), static_cast<std::streamsize>(batch.dB.size() * 8));
  out.write(reinterpret_cast<const char*>(batch.dW.data()), static_cast<std::streamsize>(batch.dW.size() * 8));
}

int BasisSpec::dimension(int step) const {
  if (step == 0) return 1;
  return kind == Kind::Polynomial ? degree + 1 : 1 << step;
}

namespace {

// Basis values of one inner path at step i.
class Basis {
 public:
  Basis(const BasisSpec& spec, const PathBatch& paths) : spec_(spec), paths_(paths) {
    const int N = paths.grid.steps();
    if (spec.kind == BasisSpec::Kind::Indicator)
      require(N <= 16, ErrorKind::InvalidArgument, "indicator basis supports N <= 16");
    cum_.assign(static_cast<std::size_t>(paths.inner) * (N + 1), 0.0);
    cells_.assign(static_cast<std::size_t>(paths.inner) * (N + 1), 0);
    for (int m = 0; m < paths.inner; ++m) {
      double w = 0.0;
      std::uint32_t cell = 0;
      for (int i = 0; i < N; ++i) {
        w += paths.w(m, i);
        if (paths.w(m, i) > 0.0 && i < 31) cell |= 1U << i;
        cum_[idx(m, i + 1)] = w;
        cells_[idx(m, i + 1)] = cell;
      }
    }
  }

  int dimension(int i) const { return spec_.dimension(i); }
  std::uint32_t cell(int m, int i) const { return cells_[idx(m, i)]; }

  void values(int m, int i, double* out) const {
    if (i == 0) {
      out[0] = 1.0;
      return;
    }
    if (spec_.kind == BasisSpec::Kind::Indicator) {
      std::fill(out, out + dimension(i), 0.0);
      out[cell(m, i)] = 1.0;
      return;
    }
    const double x = cum_[idx(m, i)] / std::sqrt(paths_.grid.t(i));
    double p = 1.0;
    for (int k = 0; k <= spec_.degree; ++k, p *= x) out[k] = p;
  }

  double dot(int m, int i, const std::vector<double>& coef) const {
    if (i == 0) return coef[0];
    if (spec_.kind == BasisSpec::Kind::Indicator) return coef[cell(m, i)];
    const double x = cum_[idx(m, i)] / std::sqrt(paths_.grid.t(i));
    double acc = 0.0;
    for (int k = spec_.degree; k >= 0; --k) acc = acc * x + coef[k];
    return acc;
  }

 private:
  std::size_t idx(int m, int i) const { return static_cast<std::size_t>(m) * (paths_.grid.steps() + 1) + i; }

  const BasisSpec& spec_;
  const PathBatch& paths_;
  std::vector<double> cum_;
  std::vector<std::uint32_t> cells_;
};

// Ridged normal equations for one step, shared by every outer path.
struct StepSystem {
  bool diagonal = false;
  Eigen::MatrixXd gram;
  Eigen::LDLT<Eigen::MatrixXd> ridged;
  Eigen::VectorXd diag;  // indicator case
  double condition = 1.0;
};

StepSystem buildSystem(const Basis& basis, const BasisSpec& spec, int i, int inner) {
  const int dim = basis.dimension(i);
  StepSystem sys;
  const double invM = 1.0 / inner;
  if (spec.kind == BasisSpec::Kind::Indicator || i == 0) {
    sys.diagonal = true;
    sys.diag = Eigen::VectorXd::Zero(dim);
    for (int m = 0; m < inner; ++m) sys.diag[i == 0 ? 0 : basis.cell(m, i)] += invM;
    const double hi = sys.diag.maxCoeff() + spec.ridge, lo = sys.diag.minCoeff() + spec.ridge;
    sys.condition = hi / lo;
    return sys;
  }
  sys.gram = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<double> phi(dim);
  for (int m = 0; m < inner; ++m) {
    basis.values(m, i, phi.data());
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b <= a; ++b) sys.gram(a, b) += phi[a] * phi[b] * invM;
  }
  sys.gram.triangularView<Eigen::StrictlyUpper>() = sys.gram.transpose().triangularView<Eigen::StrictlyUpper>();
  Eigen::MatrixXd r = sys.gram + spec.ridge * Eigen::MatrixXd::Identity(dim, dim);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
  const auto ev = eig.eigenvalues();
  sys.condition = ev.minCoeff() > 0.0 ? ev.maxCoeff() / ev.minCoeff() : std::numeric_limits<double>::infinity();
  sys.ridged.compute(r);
  if (sys.ridged.info() != Eigen::Success || !std::isfinite(sys.condition) || sys.condition > 1e15)
    fail(ErrorKind::Regression, "singular normal equations at step " + std::to_string(i) +
                                    " (condition " + std::to_string(sys.condition) + ")");
  return sys;
}

Eigen::VectorXd solveSystem(const StepSystem& sys, const BasisSpec& spec, const Eigen::VectorXd& rhs) {
  if (sys.diagonal) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
    for (int s = 0; s <= spec.refinement; ++s) {
      const Eigen::VectorXd resid = rhs - sys.diag.cwiseProduct(x);
      x += resid.cwiseQuotient((sys.diag.array() + spec.ridge).matrix());
    }
    return x;
  }
  Eigen::VectorXd x = sys.ridged.solve(rhs);
  for (int s = 0; s < spec.refinement; ++s) x += sys.ridged.solve(rhs - sys.gram * x);
  return x;
}

}  // namespace

MCSolution solveLSMC(const DriverSpec& driver, const TerminalSpec& terminal, const BasisSpec& basisSpec,
                     const PathBatch& paths, Exec exec) {
  const TimeGrid& grid = paths.grid;
  const int N = grid.steps(), M = paths.inner;
  require(basisSpec.degree >= 0, ErrorKind::InvalidArgument, "basis degree must be >= 0");
  if (basisSpec.kind == BasisSpec::Kind::Polynomial)
    require(M > 10 * (basisSpec.degree + 1), ErrorKind::InvalidArgument,
            "need more than 10 * (degree + 1) inner paths");
  require(paths.outer >= 1, ErrorKind::InvalidArgument, "no outer paths");

  Basis basis(basisSpec, paths);
  std::vector<StepSystem> systems;
  systems.reserve(N);
  for (int i = 0; i < N; ++i) systems.push_back(buildSystem(basis, basisSpec, i, M));

  std::vector<double> xi(M);
  for (int m = 0; m < M; ++m)
    xi[m] = terminal.evaluate(std::span<const double>(paths.dW.data() + static_cast<std::size_t>(m) * N, N));

  MCSolution sol;
  sol.grid = grid;
  sol.basis = basisSpec;
  sol.inner = M;
  sol.y0.assign(paths.outer, 0.0);
  sol.y0InnerSd.assign(paths.outer, 0.0);
  sol.coefY.assign(paths.outer, std::vector<std::vector<double>>(N));
  sol.coefZ.assign(paths.outer, std::vector<std::vector<double>>(N));
  for (const auto& s : systems) sol.conditionNumbers.push_back(s.condition);

  const double dt = grid.dt();
  const bool par = exec == Exec::Parallel;
  std::string error;
  ErrorKind errorKind = ErrorKind::Numeric;
#pragma omp parallel for schedule(dynamic) if (par)
  for (int o = 0; o < paths.outer; ++o) {
    try {
      std::vector<double> Y(xi), Z(M, 0.0), ty(M), tz(M), rollout(xi), phi;
      for (int i = N - 1; i >= 0; --i) {
        const double t1 = grid.t(i + 1), dB = paths.b(o, i);
        for (int m = 0; m < M; ++m) {
          const double fv = driver.f(t1, Y[m], Z[m]), gv = driver.g(t1, Y[m], Z[m]);
          ty[m] = Y[m] + dt * fv + gv * dB;
          rollout[m] += dt * fv + gv * dB;
          const double base = Y[m] + gv * dB + (basisSpec.includeDriftInZTarget ? dt * fv : 0.0);
          tz[m] = base * paths.w(m, i) / dt;
          if (!std::isfinite(ty[m]) || !std::isfinite(tz[m]))
            fail(ErrorKind::Numeric, "non-finite regression target at step " + std::to_string(i) +
                                         ", outer path " + std::to_string(o));
        }
        const int dim = basis.dimension(i);
        phi.resize(dim);
        Eigen::VectorXd ry = Eigen::VectorXd::Zero(dim), rz = Eigen::VectorXd::Zero(dim);
        for (int m = 0; m < M; ++m) {
          basis.values(m, i, phi.data());
          for (int k = 0; k < dim; ++k) {
            ry[k] += phi[k] * ty[m];
            rz[k] += phi[k] * tz[m];
          }
        }
        ry /= M;
        rz /= M;
        const Eigen::VectorXd cy = solveSystem(systems[i], basisSpec, ry);
        const Eigen::VectorXd cz = solveSystem(systems[i], basisSpec, rz);
        sol.coefY[o][i].assign(cy.data(), cy.data() + dim);
        sol.coefZ[o][i].assign(cz.data(), cz.data() + dim);
        for (int m = 0; m < M; ++m) {
          Y[m] = basis.dot(m, i, sol.coefY[o][i]);
          Z[m] = basis.dot(m, i, sol.coefZ[o][i]);
        }
      }
      double mean = 0.0, sq = 0.0;
      for (int m = 0; m < M; ++m) mean += rollout[m];
      mean /= M;
      for (int m = 0; m < M; ++m) sq += (rollout[m] - mean) * (rollout[m] - mean);
      sol.y0InnerSd[o] = std::sqrt(sq / std::max(1, M - 1));
      sol.y0[o] = sol.coefY[o][0][0];
    } catch (const Error& e) {
#pragma omp critical
      if (error.empty()) {
        error = e.what();
        errorKind = e.kind();
      }
    }
  }
  if (!error.empty()) throw Error(errorKind, error);
  return sol;
}

MCReport mcDiagnostics(const MCSolution& sol) {
  require(!sol.y0.empty(), ErrorKind::InvalidArgument, "empty MC solution");
  MCReport r;
  const auto n = static_cast<double>(sol.y0.size());
  for (double v : sol.y0) r.meanY0 += v;
  r.meanY0 /= n;
  if (sol.y0.size() > 1) {
    for (double v : sol.y0) r.varianceY0 += (v - r.meanY0) * (v - r.meanY0);
    r.varianceY0 /= n - 1;
  }
  r.outerCiHalfWidth = 1.96 * std::sqrt(r.varianceY0 / n);
  for (double sd : sol.y0InnerSd) r.innerStdError += sd / std::sqrt(static_cast<double>(sol.inner));
  r.innerStdError /= n;
  r.innerCiHalfWidth = 1.96 * r.innerStdError;
  r.conditionNumbers = sol.conditionNumbers;
  return r;
}

}  // namespace bdsde
