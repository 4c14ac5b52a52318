#include "bdsde/solution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "bdsde/error.hpp"
#include "bdsde/parallel.hpp"

namespace bdsde {

static_assert(std::endian::native == std::endian::little, "binary dumps assume little-endian");

double Solution::maxAbsY() const {
  double m = 0.0;
  for (const auto& v : Y)
    for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double Solution::maxAbsZ() const {
  double m = 0.0;
  for (const auto& v : Z)
    for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

std::size_t layoutNodes(Layout layout, int N, int i0, int i) {
  switch (layout) {
    case Layout::Scalar: return 1;
    case Layout::Tree: return std::size_t{1} << N;
    case Layout::Extended: return std::size_t{1} << (N + std::max(0, i - i0));
  }
  return 0;
}

std::size_t successor(Layout layout, int N, int i0, int i, std::size_t e, int s) {
  if (layout == Layout::Scalar) return 0;
  const std::size_t bit = std::size_t{1} << i;
  std::size_t next = (e & ~bit) | (static_cast<std::size_t>(s) << i);
  if (layout == Layout::Extended && i >= i0)
    next |= static_cast<std::size_t>((e >> i) & 1U) << (N + i - i0);
  return next;
}

void validateShape(const Solution& sol) {
  const int N = sol.grid.steps();
  require(static_cast<int>(sol.Y.size()) == N + 1 && static_cast<int>(sol.Z.size()) == N + 1,
          ErrorKind::InvalidArgument, "solution must hold N + 1 steps");
  for (int i = 0; i <= N; ++i) {
    const std::size_t want = layoutNodes(sol.layout, N, sol.splitIndex, i);
    require(sol.Y[i].size() == want && sol.Z[i].size() == want, ErrorKind::InvalidArgument,
            "step " + std::to_string(i) + " has " + std::to_string(sol.Y[i].size()) +
                " nodes, layout needs " + std::to_string(want));
  }
}

Solution makeSolution(const TimeGrid& grid, Layout layout, int splitIndex) {
  const int N = grid.steps();
  if (layout != Layout::Scalar)
    require(N <= kMaxTreeSteps, ErrorKind::Capacity,
            "tree layouts need N <= " + std::to_string(kMaxTreeSteps));
  if (layout == Layout::Extended) {
    require(splitIndex >= 0 && splitIndex <= N, ErrorKind::InvalidArgument, "split index out of range");
    require(N + (N - splitIndex) <= 24, ErrorKind::Capacity,
            "extended layout needs 2^(2N - i0) <= 2^24 nodes");
  }
  Solution sol;
  sol.grid = grid;
  sol.layout = layout;
  sol.splitIndex = splitIndex;
  sol.Y.resize(N + 1);
  sol.Z.resize(N + 1);
  for (int i = 0; i <= N; ++i) {
    const std::size_t n = layoutNodes(layout, N, splitIndex, i);
    sol.Y[i].assign(n, 0.0);
    sol.Z[i].assign(n, 0.0);
  }
  return sol;
}

double stepResidual(const Solution& sol, const DriverSpec& driver, int i, std::size_t e, int s) {
  const TimeGrid& g = sol.grid;
  const std::size_t next = successor(sol.layout, g.steps(), sol.splitIndex, i, e, s);
  const double y1 = sol.Y[i + 1][next], z1 = sol.Z[i + 1][next];
  const double t1 = g.t(i + 1);
  double rhs = y1 + g.dt() * driver.f(t1, y1, z1);
  if (sol.layout != Layout::Scalar) {
    const double dB = (bSign(sol.layout, i, e) ? 1.0 : -1.0) * g.sqrtDt();
    const double dW = (s ? 1.0 : -1.0) * g.sqrtDt();
    rhs += driver.g(t1, y1, z1) * dB - sol.Z[i][e] * dW;
  }
  return sol.Y[i][e] - rhs;
}

double terminalAt(const TerminalSpec& terminal, const TimeGrid& grid, std::size_t leaf) {
  const int N = grid.steps();
  std::vector<double> w(N);
  for (int k = 0; k < N; ++k) w[k] = ((leaf >> k) & 1U ? 1.0 : -1.0) * grid.sqrtDt();
  return terminal.evaluate(w);
}

ResidualReport residualReport(const Solution& sol, const DriverSpec& driver,
                              const TerminalSpec& terminal) {
  validateShape(sol);
  const int N = sol.grid.steps();
  ResidualReport rep;
  rep.perStep.assign(N, 0.0);
  const int signs = sol.layout == Layout::Scalar ? 1 : 2;
  for (int i = 0; i < N; ++i) {
    const auto n = static_cast<std::int64_t>(sol.nodes(i));
    double worst = 0.0;
    std::int64_t worstNode = 0;
    int worstSign = 0;
#pragma omp parallel
    {
      double w = 0.0;
      std::int64_t wn = 0;
      int ws = 0;
#pragma omp for schedule(static) nowait
      for (std::int64_t e = 0; e < n; ++e)
        for (int s = 0; s < signs; ++s) {
          const double r = std::abs(stepResidual(sol, driver, i, static_cast<std::size_t>(e), s));
          // NaN compares false, so map it to +inf.
          const double v = std::isnan(r) ? std::numeric_limits<double>::infinity() : r;
          if (v > w || (v == w && v > 0.0 && e < wn)) {
            w = v;
            wn = e;
            ws = s;
          }
        }
#pragma omp critical
      if (w > worst || (w == worst && w > 0.0 && wn < worstNode)) {
        worst = w;
        worstNode = wn;
        worstSign = ws;
      }
    }
    rep.perStep[i] = worst;
    if (worst > rep.maxResidual) {
      rep.maxResidual = worst;
      rep.worstStep = i;
      rep.worstNode = static_cast<std::size_t>(worstNode);
      rep.worstSign = worstSign;
    }
  }
  for (std::size_t e = 0; e < sol.nodes(N); ++e) {
    const double xi = sol.layout == Layout::Scalar
                          ? terminal.evaluate(std::vector<double>(N, 0.0))
                          : terminalAt(terminal, sol.grid, treeIndex(sol.layout, N, e));
    rep.terminalMismatch = std::max(rep.terminalMismatch, std::abs(sol.Y[N][e] - xi));
  }
  return rep;
}

double treeResidual(const Solution& sol, const DriverSpec& driver, const TerminalSpec& terminal) {
  const auto rep = residualReport(sol, driver, terminal);
  return std::max(rep.maxResidual, rep.terminalMismatch);
}

NodeSummary expectationAt(const Solution& sol, int i) {
  require(i >= 0 && i <= sol.grid.steps() && i < static_cast<int>(sol.Y.size()),
          ErrorKind::InvalidArgument, "step index " + std::to_string(i) + " out of range");
  const auto& v = sol.Y[i];
  NodeSummary s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  s.mean = sum / static_cast<double>(v.size());
  s.meanSquare = sq / static_cast<double>(v.size());
  return s;
}

double s2Norm(const Solution& sol) {
  double m = 0.0;
  for (int i = 0; i < static_cast<int>(sol.Y.size()); ++i) m = std::max(m, expectationAt(sol, i).meanSquare);
  return m;
}

namespace {

void requireSameShape(const Solution& a, const Solution& b) {
  require(a.Y.size() == b.Y.size(), ErrorKind::InvalidArgument, "solutions have different step counts");
  for (std::size_t i = 0; i < a.Y.size(); ++i)
    require(a.Y[i].size() == b.Y[i].size() && a.Z[i].size() == b.Z[i].size(),
            ErrorKind::InvalidArgument, "solutions differ in shape at step " + std::to_string(i));
}

}  // namespace

double m2DistanceZ(const Solution& a, const Solution& b) {
  requireSameShape(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < a.Z.size(); ++i) {
    double sq = 0.0;
    for (std::size_t e = 0; e < a.Z[i].size(); ++e) {
      const double d = a.Z[i][e] - b.Z[i][e];
      sq += d * d;
    }
    total += a.grid.dt() * sq / static_cast<double>(a.Z[i].size());
  }
  return total;
}

double supDistance(const Solution& a, const Solution& b) {
  requireSameShape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.Y.size(); ++i)
    for (std::size_t e = 0; e < a.Y[i].size(); ++e) m = std::max(m, std::abs(a.Y[i][e] - b.Y[i][e]));
  return m;
}

namespace {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::InvalidArgument, "truncated solution dump");
  return v;
}

constexpr char kMagic[8] = {'B', 'D', 'S', 'D', 'E', 'T', 'R', 'E'};

}  // namespace

void writeBinary(const Solution& sol, const std::string& descriptor, std::ostream& out) {
  validateShape(sol);
  out.write(kMagic, 8);
  put<std::uint32_t>(out, 1);
  put<std::int32_t>(out, sol.grid.steps());
  put<double>(out, sol.grid.horizon());
  put<double>(out, sol.grid.dt());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sol.layout));
  put<std::int32_t>(out, sol.splitIndex);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(descriptor.size()));
  out.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
  for (std::size_t i = 0; i < sol.Y.size(); ++i) {
    put<std::uint64_t>(out, sol.Y[i].size());
    out.write(reinterpret_cast<const char*>(sol.Y[i].data()),
              static_cast<std::streamsize>(sol.Y[i].size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(sol.Z[i].data()),
              static_cast<std::streamsize>(sol.Z[i].size() * sizeof(double)));
  }
}

Solution readBinary(std::istream& in, std::string* descriptor) {
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, kMagic, 8) == 0, ErrorKind::InvalidArgument, "not a solution dump");
  require(get<std::uint32_t>(in) == 1, ErrorKind::InvalidArgument, "unsupported dump version");
  const int N = get<std::int32_t>(in);
  const double T = get<double>(in);
  get<double>(in);
  const auto layout = static_cast<Layout>(get<std::uint32_t>(in));
  const int split = get<std::int32_t>(in);
  const auto len = get<std::uint32_t>(in);
  std::string desc(len, '\0');
  in.read(desc.data(), len);
  if (descriptor) *descriptor = desc;
  Solution sol = makeSolution(makeGrid(T, N), layout, split);
  for (int i = 0; i <= N; ++i) {
    const auto count = get<std::uint64_t>(in);
    require(count == sol.Y[i].size(), ErrorKind::InvalidArgument, "dump node count mismatch");
    in.read(reinterpret_cast<char*>(sol.Y[i].data()), static_cast<std::streamsize>(count * sizeof(double)));
    in.read(reinterpret_cast<char*>(sol.Z[i].data()), static_cast<std::streamsize>(count * sizeof(double)));
    require(static_cast<bool>(in), ErrorKind::InvalidArgument, "truncated solution dump");
  }
  return sol;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void writeSummaryCsv(const Solution& sol, std::ostream& out) {
  out << "step,t,Y_mean,Y_min,Y_max,Y_meansq\n";
  for (int i = 0; i < static_cast<int>(sol.Y.size()); ++i) {
    const auto s = expectationAt(sol, i);
    out << i << ',' << fmt17(sol.grid.t(i)) << ',' << fmt17(s.mean) << ',' << fmt17(s.min) << ','
        << fmt17(s.max) << ',' << fmt17(s.meanSquare) << '\n';
  }
}

}  // namespace bdsde
