#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/parallel.hpp"

namespace bdsde {

inline constexpr std::size_t kConvGridCap = 10'000'000;

/// Finite truncation of the rational lattice: the points k * spacing with
/// |k * spacing| <= radius on every axis the driver depends on. The lattice is
/// anchored at the origin, not at the probe, so one lattice serves every
/// evaluation and the regularized driver is exactly n-Lipschitz.
struct ConvGridSpec {
  double radius = 10.0;
  double spacing = 1.0 / 64;

  std::size_t pointsPerAxis() const;
  std::size_t pointCount(int axes) const;
  /// Throws InvalidArgument on spacing > radius, Capacity above kConvGridCap.
  void validate(int axes) const;

  /// Largest power-of-two spacing with 2 * n * spacing <= tol, coarsened
  /// until the lattice fits under maxPoints.
  static ConvGridSpec forTolerance(double n, double tol, double radius, int axes,
                                   std::size_t maxPoints = kConvGridCap);
};

enum class ConvMode { Inf, Sup };

/// Diagnostics shared by every copy of a regularized part.
struct ConvStats {
  std::atomic<std::uint64_t> evaluations{0};
  std::atomic<std::uint64_t> boundaryHits{0};  // optimizer on the box edge
};

/// f_n for n >= K: inf/sup over the lattice of f(t,y',z') +/- n(|y-y'|+|z-z'|).
/// Axes the driver does not depend on are not discretized; the sup/inf over a
/// dense set along such an axis is attained exactly at y' = y (or z' = z).
struct RegularizedPart {
  DriverPart part;  // lipschitz = n, growth constants inherited
  double n = 0.0;
  ConvMode mode = ConvMode::Sup;
  ConvGridSpec grid;
  int axes = 0;
  std::shared_ptr<ConvStats> stats;

  double gridErrorBound() const { return 2.0 * n * grid.spacing; }
  double operator()(double t, double y, double z) const { return part(t, y, z); }
};

RegularizedPart infConv(const DriverPart& f, double n, const ConvGridSpec& grid,
                        Exec exec = Exec::Parallel);
RegularizedPart supConv(const DriverPart& f, double n, const ConvGridSpec& grid,
                        Exec exec = Exec::Parallel);
RegularizedPart regularize(const DriverPart& f, double n, ConvMode mode, const ConvGridSpec& grid,
                           Exec exec = Exec::Parallel);

/// Number of lattice axes used for f (0, 1 or 2).
int latticeAxes(const DriverPart& f);

/// Composite 8-point Gauss-Legendre rule on [-1, 1] with the bump kernel
/// J(u) = k exp(-1 / (1 - |u|)) folded into the weights. k is fixed by the
/// same rule, so the weights sum to 1.
struct MollifierRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // w_i * J(u_i), normalized
  double normalizer = 0.0;      // k

  static MollifierRule make(int quadPoints);
  double mass() const;
  /// Integral of |J'| over [-1, 1] (= 2 k / e since J is unimodal).
  double derivativeL1() const;
};

/// y -> integral of f(t, x, z) J_delta(y - x) dx over [y - delta, y + delta].
DriverPart mollify(const DriverPart& f, double delta, int quadPoints = 64);

/// -|f(t,0,0)| - K|y| - K|z|; requires declared growth constants.
DriverPart lowerBoundDriver(const DriverSpec& driver);
/// max(D, |f(t,0,0)|) + K|y| + K|z|; the mirror bound for the minimal side.
DriverPart upperBoundDriver(const DriverSpec& driver);

/// mollify(f2 + epsBar / 2, delta): a smooth driver strictly between f2 and
/// any f1 with f1 - f2 >= epsBar, up to the mollification modulus.
DriverPart separatingMollifiedDriver(const DriverPart& f2, double epsBar, double delta,
                                     int quadPoints = 64);

}  // namespace bdsde
