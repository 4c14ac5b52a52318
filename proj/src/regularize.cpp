#include "bdsde/regularize.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "bdsde/error.hpp"

namespace bdsde {

std::size_t ConvGridSpec::pointsPerAxis() const {
  return 2 * static_cast<std::size_t>(std::floor(radius / spacing)) + 1;
}

std::size_t ConvGridSpec::pointCount(int axes) const {
  std::size_t count = 1;
  for (int a = 0; a < axes; ++a) count *= pointsPerAxis();
  return count;
}

void ConvGridSpec::validate(int axes) const {
  require(std::isfinite(radius) && radius > 0.0, ErrorKind::InvalidArgument,
          "lattice radius must be > 0");
  require(std::isfinite(spacing) && spacing > 0.0 && spacing <= radius,
          ErrorKind::InvalidArgument, "lattice spacing must satisfy 0 < spacing <= radius");
  const double perAxis = 2.0 * std::floor(radius / spacing) + 1.0;
  require(std::pow(perAxis, axes) <= static_cast<double>(kConvGridCap), ErrorKind::Capacity,
          "regularization lattice has " + std::to_string(std::pow(perAxis, axes)) +
              " points, cap is " + std::to_string(kConvGridCap));
}

ConvGridSpec ConvGridSpec::forTolerance(double n, double tol, double radius, int axes,
                                        std::size_t maxPoints) {
  require(n > 0.0 && tol > 0.0 && radius > 0.0, ErrorKind::InvalidArgument,
          "forTolerance needs positive n, tol and radius");
  ConvGridSpec spec;
  spec.radius = radius;
  spec.spacing = std::ldexp(1.0, static_cast<int>(std::floor(std::log2(tol / (2.0 * n)))));
  const std::size_t cap = std::min(maxPoints, kConvGridCap);
  while (spec.spacing < radius && std::pow(2.0 * std::floor(radius / spec.spacing) + 1.0, axes) >
                                      static_cast<double>(cap))
    spec.spacing *= 2.0;
  spec.spacing = std::min(spec.spacing, radius);
  return spec;
}

int latticeAxes(const DriverPart& f) {
  return static_cast<int>(f.dependsOnY) + static_cast<int>(f.dependsOnZ);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Sup-convolution of v over a lattice, in "absolute" form: every table entry
// is a running max of v + sy*n*q_y + sz*n*q_z, so no rounding accumulates
// along the lattice and the evaluated function is n-Lipschitz to a few ulp.
struct Tables {
  // 1D: tab[0] = prefix max of v + n q, tab[1] = suffix max of v - n q.
  // 2D: tab[q] for quadrant q = (y-side, z-side), index i * m + j.
  std::vector<double> tab[4];
  std::vector<std::uint8_t> edge[4];
};

class SupLattice {
 public:
  SupLattice(DriverPart f, double sign, double n, ConvGridSpec grid, Exec exec)
      : f_(std::move(f)), sign_(sign), n_(n), grid_(grid), exec_(exec) {
    axes_ = latticeAxes(f_);
    half_ = static_cast<std::int64_t>(std::floor(grid_.radius / grid_.spacing));
    m_ = static_cast<std::size_t>(2 * half_ + 1);
  }

  int axes() const { return axes_; }

  double evaluate(double t, double y, double z, bool& onEdge) const {
    onEdge = false;
    if (axes_ == 0) return sign_ * f_(t, y, z);
    const Tables& tb = tablesFor(t);
    if (axes_ == 1) {
      const double x = f_.dependsOnY ? y : z;
      return sign_ * eval1(tb, x, onEdge);
    }
    return sign_ * eval2(tb, y, z, onEdge);
  }

 private:
  double q(std::int64_t k) const { return static_cast<double>(k - half_) * grid_.spacing; }

  // Largest lattice index with q <= x, or -1; the right neighbour is il + 1.
  std::int64_t leftIndex(double x) const {
    const double u = std::floor(x / grid_.spacing) + static_cast<double>(half_);
    if (u < 0.0) return -1;
    if (u > static_cast<double>(m_ - 1)) return static_cast<std::int64_t>(m_ - 1);
    return static_cast<std::int64_t>(u);
  }

  double eval1(const Tables& tb, double x, bool& onEdge) const {
    const std::int64_t il = leftIndex(x);
    const std::int64_t ir = il + 1;
    double best = kNegInf;
    if (il >= 0) {
      best = tb.tab[0][il] - n_ * x;
      onEdge = tb.edge[0][il];
    }
    if (ir < static_cast<std::int64_t>(m_)) {
      const double v = tb.tab[1][ir] + n_ * x;
      if (v > best) {
        best = v;
        onEdge = tb.edge[1][ir];
      }
    }
    return best;
  }

  double eval2(const Tables& tb, double y, double z, bool& onEdge) const {
    const std::int64_t iy[2] = {leftIndex(y), leftIndex(y) + 1};
    const std::int64_t iz[2] = {leftIndex(z), leftIndex(z) + 1};
    const auto M = static_cast<std::int64_t>(m_);
    double best = kNegInf;
    for (int a = 0; a < 2; ++a) {
      if (iy[a] < 0 || iy[a] >= M) continue;
      for (int b = 0; b < 2; ++b) {
        if (iz[b] < 0 || iz[b] >= M) continue;
        const int quad = 2 * a + b;
        const std::size_t idx = static_cast<std::size_t>(iy[a]) * m_ + static_cast<std::size_t>(iz[b]);
        // a = 0: lattice points left of y carry +n q_y, so subtract n y.
        const double v = tb.tab[quad][idx] + (a == 0 ? -n_ * y : n_ * y) + (b == 0 ? -n_ * z : n_ * z);
        if (v > best) {
          best = v;
          onEdge = tb.edge[quad][idx];
        }
      }
    }
    return best;
  }

  const Tables& tablesFor(double t) const {
    if (f_.timeHomogeneous) {
      std::call_once(onceFlag_, [&] { homogeneous_ = build(0.0); });
      return *homogeneous_;
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return *it->second;
    if (cache_.size() >= 4) cache_.erase(cache_.begin());
    auto built = build(t);
    const Tables& ref = *built;
    cache_.emplace(t, std::move(built));
    return ref;
  }

  std::shared_ptr<Tables> build(double t) const {
    auto tb = std::make_shared<Tables>();
    const std::size_t m = m_;
    const auto mi = static_cast<std::int64_t>(m);
    const bool par = exec_ == Exec::Parallel;
    if (axes_ == 1) {
      std::vector<double> v(m);
#pragma omp parallel for schedule(static) if (par)
      for (std::int64_t k = 0; k < mi; ++k) {
        const double x = q(k);
        v[k] = (f_.dependsOnY ? f_(t, x, 0.0) : f_(t, 0.0, x));
      }
      for (int side = 0; side < 2; ++side) {
        tb->tab[side].assign(m, kNegInf);
        tb->edge[side].assign(m, 0);
      }
      double run = kNegInf;
      std::uint8_t runEdge = 0;
      for (std::int64_t k = 0; k < mi; ++k) {
        const double w = v[k] + n_ * q(k);
        if (w > run) {
          run = w;
          runEdge = (k == 0 || k == mi - 1);
        }
        tb->tab[0][k] = run;
        tb->edge[0][k] = runEdge;
      }
      run = kNegInf;
      runEdge = 0;
      for (std::int64_t k = mi - 1; k >= 0; --k) {
        const double w = v[k] - n_ * q(k);
        if (w > run) {
          run = w;
          runEdge = (k == 0 || k == mi - 1);
        }
        tb->tab[1][k] = run;
        tb->edge[1][k] = runEdge;
      }
    } else {
      std::vector<double> v(m * m);
#pragma omp parallel for schedule(static) if (par)
      for (std::int64_t i = 0; i < mi; ++i)
        for (std::int64_t j = 0; j < mi; ++j) v[i * m + j] = f_(t, q(i), q(j));
      for (int quad = 0; quad < 4; ++quad) {
        const int a = quad / 2, b = quad % 2;
        const double sy = a == 0 ? 1.0 : -1.0, sz = b == 0 ? 1.0 : -1.0;
        auto& tab = tb->tab[quad];
        auto& edge = tb->edge[quad];
        tab.assign(m * m, kNegInf);
        edge.assign(m * m, 0);
        // Pass 1: running max along z within each y-row.
#pragma omp parallel for schedule(static) if (par)
        for (std::int64_t i = 0; i < mi; ++i) {
          double run = kNegInf;
          std::uint8_t runEdge = 0;
          for (std::int64_t s = 0; s < mi; ++s) {
            const std::int64_t j = b == 0 ? s : mi - 1 - s;
            const double w = v[i * m + j] + sy * n_ * q(i) + sz * n_ * q(j);
            if (w > run) {
              run = w;
              runEdge = (i == 0 || i == mi - 1 || j == 0 || j == mi - 1);
            }
            tab[i * m + j] = run;
            edge[i * m + j] = runEdge;
          }
        }
        // Pass 2: running max along y within each z-column.
#pragma omp parallel for schedule(static) if (par)
        for (std::int64_t j = 0; j < mi; ++j) {
          double run = kNegInf;
          std::uint8_t runEdge = 0;
          for (std::int64_t s = 0; s < mi; ++s) {
            const std::int64_t i = a == 0 ? s : mi - 1 - s;
            const std::size_t idx = i * m + j;
            if (tab[idx] > run) {
              run = tab[idx];
              runEdge = edge[idx];
            }
            tab[idx] = run;
            edge[idx] = runEdge;
          }
        }
      }
    }
    return tb;
  }

  DriverPart f_;
  double sign_;
  double n_;
  ConvGridSpec grid_;
  Exec exec_;
  int axes_ = 0;
  std::int64_t half_ = 0;
  std::size_t m_ = 0;

  mutable std::once_flag onceFlag_;
  mutable std::shared_ptr<Tables> homogeneous_;
  mutable std::mutex mutex_;
  mutable std::map<double, std::shared_ptr<Tables>> cache_;
};

double declaredGrowthK(const DriverPart& f) {
  if (f.growthK) return *f.growthK;
  if (f.lipschitz) return *f.lipschitz;
  fail(ErrorKind::Precondition, "regularization needs a growth constant K for '" + f.label + "'");
}

}  // namespace

RegularizedPart regularize(const DriverPart& f, double n, ConvMode mode, const ConvGridSpec& grid,
                           Exec exec) {
  require(static_cast<bool>(f.fn), ErrorKind::InvalidArgument, "empty driver part");
  const double K = declaredGrowthK(f);
  require(std::isfinite(n) && n >= K, ErrorKind::Precondition,
          "regularization parameter n = " + std::to_string(n) + " must be >= K = " +
              std::to_string(K) + " (well-defined only for n >= K)");
  const int axes = latticeAxes(f);
  grid.validate(axes);

  // inf-convolution of f is minus the sup-convolution of -f.
  const double sign = mode == ConvMode::Sup ? 1.0 : -1.0;
  DriverPart signedF = f;
  if (sign < 0.0) {
    auto base = f.fn;
    signedF.fn = [base](double t, double y, double z) { return -base(t, y, z); };
  }
  auto lattice = std::make_shared<const SupLattice>(signedF, sign, n, grid, exec);
  auto stats = std::make_shared<ConvStats>();

  RegularizedPart out;
  out.n = n;
  out.mode = mode;
  out.grid = grid;
  out.axes = axes;
  out.stats = stats;
  out.part = f;
  out.part.label = std::string(mode == ConvMode::Sup ? "supconv" : "infconv") + "[n=" +
                   std::to_string(n) + "](" + f.label + ")";
  out.part.lipschitz = n;
  out.part.growthK = K;
  out.part.fn = [lattice, stats](double t, double y, double z) {
    bool onEdge = false;
    const double v = lattice->evaluate(t, y, z, onEdge);
    stats->evaluations.fetch_add(1, std::memory_order_relaxed);
    if (onEdge) stats->boundaryHits.fetch_add(1, std::memory_order_relaxed);
    return v;
  };
  return out;
}

RegularizedPart infConv(const DriverPart& f, double n, const ConvGridSpec& grid, Exec exec) {
  return regularize(f, n, ConvMode::Inf, grid, exec);
}

RegularizedPart supConv(const DriverPart& f, double n, const ConvGridSpec& grid, Exec exec) {
  return regularize(f, n, ConvMode::Sup, grid, exec);
}

MollifierRule MollifierRule::make(int quadPoints) {
  require(quadPoints >= 8, ErrorKind::InvalidArgument, "mollifier needs quadPoints >= 8");
  using Rule = boost::math::quadrature::gauss<double, 8>;
  const int panels = quadPoints / 8;
  const double width = 2.0 / panels;
  MollifierRule rule;
  auto kernel = [](double u) {
    const double a = std::abs(u);
    return a < 1.0 ? std::exp(-1.0 / (1.0 - a)) : 0.0;
  };
  // Boost stores the non-negative half of the symmetric 8-point rule.
  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  for (int p = 0; p < panels; ++p) {
    const double mid = -1.0 + (p + 0.5) * width;
    for (std::size_t k = 0; k < abscissa.size(); ++k) {
      for (double s : {-1.0, 1.0}) {
        if (abscissa[k] == 0.0 && s > 0.0) continue;
        const double u = mid + s * abscissa[k] * width / 2;
        rule.nodes.push_back(u);
        rule.weights.push_back(weights[k] * width / 2 * kernel(u));
      }
    }
  }
  double raw = 0.0;
  for (double w : rule.weights) raw += w;
  rule.normalizer = 1.0 / raw;
  for (double& w : rule.weights) w *= rule.normalizer;
  return rule;
}

double MollifierRule::mass() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double MollifierRule::derivativeL1() const { return 2.0 * normalizer * std::exp(-1.0); }

DriverPart mollify(const DriverPart& f, double delta, int quadPoints) {
  require(std::isfinite(delta) && delta > 0.0, ErrorKind::InvalidArgument,
          "mollifier width delta must be > 0");
  auto rule = std::make_shared<const MollifierRule>(MollifierRule::make(quadPoints));
  DriverPart out = f;
  out.label = "mollify[delta=" + std::to_string(delta) + "](" + f.label + ")";
  if (f.growthK && f.growthD) out.growthD = *f.growthD + *f.growthK * delta;
  if (!f.dependsOnY) return out;  // constant in y: the kernel has unit mass
  auto base = f.fn;
  out.fn = [base, rule, delta](double t, double y, double z) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule->nodes.size(); ++i)
      acc += rule->weights[i] * base(t, y - delta * rule->nodes[i], z);
    return acc;
  };
  return out;
}

DriverPart lowerBoundDriver(const DriverSpec& driver) {
  require(driver.growthK.has_value() && driver.growthD.has_value(), ErrorKind::Precondition,
          "bounding driver needs growth constants K and D");
  const double K = *driver.growthK;
  auto f = driver.f;
  DriverPart F;
  F.label = "lower_bound(" + driver.fRef.str() + ")";
  F.fn = [f, K](double t, double y, double z) {
    return -std::abs(f(t, 0.0, 0.0)) - K * std::abs(y) - K * std::abs(z);
  };
  F.lipschitz = K;
  F.growthK = K;
  F.growthD = driver.growthD;
  F.dependsOnY = F.dependsOnZ = K != 0.0;
  F.timeHomogeneous = driver.timeHomogeneous;
  return F;
}

DriverPart upperBoundDriver(const DriverSpec& driver) {
  require(driver.growthK.has_value() && driver.growthD.has_value(), ErrorKind::Precondition,
          "bounding driver needs growth constants K and D");
  const double K = *driver.growthK;
  const double D = *driver.growthD;
  auto f = driver.f;
  DriverPart F;
  F.label = "upper_bound(" + driver.fRef.str() + ")";
  F.fn = [f, K, D](double t, double y, double z) {
    return std::max(D, std::abs(f(t, 0.0, 0.0))) + K * std::abs(y) + K * std::abs(z);
  };
  F.lipschitz = K;
  F.growthK = K;
  F.growthD = driver.growthD;
  F.dependsOnY = F.dependsOnZ = K != 0.0;
  F.timeHomogeneous = driver.timeHomogeneous;
  return F;
}

DriverPart separatingMollifiedDriver(const DriverPart& f2, double epsBar, double delta,
                                     int quadPoints) {
  require(std::isfinite(epsBar) && epsBar > 0.0, ErrorKind::InvalidArgument, "epsBar must be > 0");
  DriverPart shifted = f2;
  auto base = f2.fn;
  const double half = epsBar / 2.0;
  shifted.fn = [base, half](double t, double y, double z) { return base(t, y, z) + half; };
  if (shifted.growthD) shifted.growthD = *shifted.growthD + half;
  DriverPart out = mollify(shifted, delta, quadPoints);
  out.label = "separating[eps=" + std::to_string(epsBar) + "](" + f2.label + ")";
  return out;
}

}  // namespace bdsde
