#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/envelope.hpp"
#include "bdsde/tree_solver.hpp"

namespace bdsde {

struct InverseReport {
  int probes = 0;
  double forwardResidual = 0.0;   // max |g(t,y,h(t,y,zt)) - zt|
  double backwardResidual = 0.0;  // max |h(t,y,g(t,y,z)) - z|
  double hLipZsq = 0.0;           // estimated squared z-slope of h
  bool hLipFlag = false;          // hLipZsq >= 1
  bool pass = false;              // both residuals <= tol
  double witnessT = 0.0, witnessY = 0.0, witnessZ = 0.0;  // worst probe
};

/// Probes t in [0, 1], y and z in [-10, 10], drawn from mt19937_64(seed).
InverseReport validateInverse(const ScalarFn& g, const InverseFn& hInv, int probeCount, std::uint64_t seed,
                              double tol = 1e-8);

struct InvertiblePair {
  ScalarFn g;
  InverseFn hInv;
  double hLipZsq = 0.0;  // declared
  InverseReport report;
};

/// Validates and packages. Throws Inversion if the report fails.
InvertiblePair makeInvertiblePair(const DriverSpec& driver, InverseFn hInv, std::optional<double> hLipZsq = {},
                                  int probeCount = 10000, std::uint64_t seed = 1);

/// Closed-form inverses for g_linear and g_sine; throws Inversion otherwise.
InvertiblePair builtinInverse(const DriverSpec& driver);

/// Numeric inverse of a g strictly monotone in z, by bisection on
/// [zLo, zHi] to full double precision. NaN when the target is not bracketed.
InverseFn bisectionInverse(ScalarFn g, double zLo = -1e6, double zHi = 1e6);

/// lambda * Ymin(i0) + (1 - lambda) * Ymax(i0), nodewise.
std::vector<double> interpolateTarget(const EnvelopeResult& env, int i0, double lambda);

struct GlueOptions {
  /// Exit band shrink. NaN means dt^2 * (1 + max |Ymax|).
  double snapTol = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> zStart;  // Z at i0 for the forward segment; empty means 0
  Exec exec = Exec::Parallel;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // recorded only
};

/// Backward segment on [0, i0], forward segment from eta, envelope tail after
/// the first exit from the open band. The glued field lives on the
/// Extended(i0) layout: after i0 the exit time depends on B increments that
/// are already in the past.
struct GluedSolution {
  double lambda = 0.0;
  int i0 = 0;
  double snapTol = 0.0;
  Solution segment1;        // Tree layout, steps 0..i0
  ForwardSegment segment2;  // steps i0..N
  Solution field;           // Extended(i0)
  std::vector<int> tauIndex;             // per leaf of the field
  std::vector<std::uint8_t> tailMax;     // per leaf: 1 = maximal side
  double tauMean = 0.0;                  // mean exit time over leaves
  double offSpliceResidual = 0.0;        // against f, on both segments
  double tailResidual = 0.0;             // against the regularized driver of the tail side
  double tailDriverGap = 0.0;            // dt * max |f_n - f| along the tail
  double spliceMismatch = 0.0;           // max residual at splice steps
  double exitOvershoot = 0.0;            // max distance of the exit value past snapTol of its side
  bool hLipFlag = false;

  double scale() const { return 1.0 + field.maxAbsY(); }
};

GluedSolution glueSolution(const DriverSpec& driver, const InvertiblePair& pair, const TerminalSpec& terminal,
                           int i0, const std::vector<double>& eta, const EnvelopeResult& env,
                           const GlueOptions& opt = {});

/// g = 0 and a constant terminal: scalar paths. The backward part is the
/// explicit recursion; the forward part inverts it, y_{j+1} + dt f(t_{j+1},
/// y_{j+1}) = y_j, so that the whole path satisfies one scheme.
struct DeterministicGlue {
  double lambda = 0.0;
  int i0 = 0;
  double snapTol = 0.0;
  std::vector<double> y;  // steps 0..N
  int tauIndex = 0;
  bool tailMax = false;
  double offSpliceResidual = 0.0;
  double tailResidual = 0.0;
  double tailDriverGap = 0.0;
  double spliceMismatch = 0.0;
  double exitOvershoot = 0.0;

  Solution asSolution(const TimeGrid& grid) const;
};

DeterministicGlue glueDeterministic(const DriverSpec& driver, int i0, double eta, const EnvelopeResult& env,
                                    const GlueOptions& opt = {});

struct ContinuumCase {
  DriverSpec driver;
  TerminalSpec terminal;
  TimeGrid grid;
  int i0 = 0;
  EnvelopeOptions envelope;  // backend Scalar selects the deterministic glue
  std::optional<InvertiblePair> inverse;  // required for the tree glue
  GlueOptions glue;
};

struct ContinuumRow {
  double lambda = 0.0;
  double y0 = 0.0;  // mean of Y_0 over nodes
  double tauMean = 0.0;
  double residualOffSplice = 0.0;
  double spliceMismatch = 0.0;
  bool sandwichPass = false;
  double sandwichViolation = 0.0;
  bool etaExact = false;  // Y at i0 equals eta bitwise
};

struct ContinuumReport {
  EnvelopeResult envelope;
  std::vector<ContinuumRow> rows;
  std::vector<Solution> solutions;
  std::vector<std::vector<double>> distance;  // pairwise sup-node distances
  int distinctPairs = 0;                      // pairs with distance > 10 dt
  double distinctTol = 0.0;
};

ContinuumReport continuumSample(const ContinuumCase& spec, const std::vector<double>& lambdas);

/// Columns lambda,Y0,tauMean,residualOffSplice,spliceMismatch,sandwichPass.
void writeContinuumCsv(const ContinuumReport& rep, std::ostream& out);

}  // namespace bdsde
