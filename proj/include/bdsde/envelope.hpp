#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/regularize.hpp"
#include "bdsde/solution.hpp"

namespace bdsde {

enum class Backend { Tree, Scalar };

struct EnvelopeOptions {
  /// Regularization parameters, strictly increasing, first >= K. Empty means
  /// max(K, 1) * 2^k for k = 0..7, cut where dt * n would exceed 0.5.
  std::vector<double> schedule;
  double tol = 1e-6;  // stop once consecutive iterates are this close (sup over nodes)
  Backend backend = Backend::Tree;
  double gridTol = 1e-3;  // target for 2 n spacing at the largest n
  std::size_t maxLatticePoints = std::size_t{1} << 22;
  bool keepIterates = true;  // store every iterate field in the log
  Exec exec = Exec::Parallel;
};

struct IterateRecord {
  int k = 0;
  double n = 0.0;
  Solution field;  // empty unless keepIterates
  double supDistPrev = 0.0;  // NaN for the first iterate
  double y0Mean = 0.0;
  double s2 = 0.0;           // sup over steps of the mean square of Y
  double m2DistZPrev = 0.0;  // NaN for the first iterate
  double boundGap = 0.0;     // max of U - Y (maximal side) or Y - V (minimal side)
  std::uint64_t boundaryHits = 0;
};

struct EnvelopeSide {
  ConvMode mode = ConvMode::Sup;
  Solution solution;  // last iterate
  Solution bound;     // U (maximal side) or V (minimal side)
  double boundS2 = 0.0;
  std::vector<IterateRecord> log;
  std::vector<double> schedule;
  ConvGridSpec lattice;
  /// T * 2 n spacing * axes at the last lattice iterate (0 without lattice):
  /// first-order size of the lattice error in Y. Off-lattice probes see
  /// sup-convolutions slightly below f and inf-convolutions slightly above,
  /// so the two sides can cross by about this much.
  double latticeErrorBound = 0.0;
  DriverSpec finalDriver;  // the regularized driver of the last iterate
  bool converged = false;
};

struct EnvelopeResult {
  EnvelopeSide maximal;
  EnvelopeSide minimal;
};

/// Schedule actually used for a driver on a grid (see EnvelopeOptions).
/// Throws Scheme if dt * n > 0.5 for some n, Precondition if the schedule
/// is not increasing or starts below K.
std::vector<double> envelopeSchedule(const DriverSpec& driver, const TimeGrid& grid,
                                     const std::vector<double>& requested);

/// Decreasing sequence of sup-convolution solutions. The U field solves the
/// lower bounding driver. Throws Consistency when iterates increase by more
/// than 1e-9 at some node or drop below U beyond the lattice slack.
EnvelopeSide maximalSolution(const DriverSpec& driver, const TerminalSpec& terminal,
                             const TimeGrid& grid, const EnvelopeOptions& opt = {});

/// Increasing sequence of inf-convolution solutions, bounded above by V.
EnvelopeSide minimalSolution(const DriverSpec& driver, const TerminalSpec& terminal,
                             const TimeGrid& grid, const EnvelopeOptions& opt = {});

EnvelopeResult envelope(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                        const EnvelopeOptions& opt = {});

struct SandwichReport {
  bool pass = true;
  double worstViolation = 0.0;  // max of Ymin - Y and Y - Ymax (clamped at 0)
  int step = -1;
  std::size_t node = 0;
  bool aboveMax = false;
  double bandInversion = 0.0;  // max of Ymin - Ymax
};

/// Ymin - tol <= Y <= Ymax + tol nodewise. Tree or Extended candidates map
/// onto the envelope nodes by W history and B future; a scalar envelope is
/// compared against every node.
SandwichReport sandwichCheck(const Solution& candidate, const EnvelopeResult& env, double tol);

/// Columns k,n_k,supDistPrev,Y0_mean,converged.
void writeEnvelopeCsv(const EnvelopeSide& side, std::ostream& out);

}  // namespace bdsde
