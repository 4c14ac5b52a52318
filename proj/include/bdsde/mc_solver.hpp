#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/grid.hpp"
#include "bdsde/parallel.hpp"

namespace bdsde {

inline constexpr std::size_t kPathBytesCap = std::size_t{1} << 31;

/// Outer B paths and inner W paths; increments stored row-major
/// (path * N + step). Only d = l = 1.
struct PathBatch {
  TimeGrid grid;
  int outer = 0;
  int inner = 0;
  std::uint64_t seed = 0;
  bool antithetic = false;
  bool binary = false;  // +-sqrt(dt) increments injected instead of Gaussians
  std::vector<double> dB;
  std::vector<double> dW;

  double b(int path, int step) const { return dB[static_cast<std::size_t>(path) * grid.steps() + step]; }
  double w(int path, int step) const { return dW[static_cast<std::size_t>(path) * grid.steps() + step]; }
};

/// Standard normal draw fully determined by its coordinates.
double counterNormal(std::uint64_t seed, std::uint64_t stream, std::uint64_t path, std::uint64_t step,
                     std::uint64_t dim = 0);

/// Gaussian increments N(0, dt). With antithetic on, path 2k+1 is the
/// negation of path 2k.
PathBatch samplePaths(const TimeGrid& grid, int outer, int inner, std::uint64_t seed, bool antithetic,
                      int dimD = 1, int dimL = 1, Exec exec = Exec::Parallel);

/// Binary +-sqrt(dt) increments: all 2^N W paths enumerated as inner paths
/// (path index bits = signs) and the given B sign patterns as outer paths.
PathBatch binaryPaths(const TimeGrid& grid, const std::vector<std::uint64_t>& bPatterns);

/// Dump: char[8] "BDSDEPTH", u32 version (1), i32 N, f64 T, i32 outer,
/// i32 inner, u64 seed, u8 antithetic, u8 binary, f64 dB[outer*N],
/// f64 dW[inner*N]; little-endian.
void writeBinary(const PathBatch& batch, std::ostream& out);

struct BasisSpec {
  enum class Kind { Polynomial, Indicator };
  Kind kind = Kind::Polynomial;
  int degree = 2;  // polynomial in W_{t_i} / sqrt(t_i)
  double ridge = 1e-8;
  /// Sweeps of iterative refinement against the unridged Gram matrix.
  int refinement = 2;
  /// Adds dt * f to the Z target (needed for exact agreement with the tree).
  bool includeDriftInZTarget = false;

  int dimension(int step) const;
};

struct MCSolution {
  TimeGrid grid;
  BasisSpec basis;
  std::vector<double> y0;         // per outer path
  /// Per outer path: sample sd of xi + sum_i (dt f + g dB_i) along each inner
  /// path, the pathwise quantity whose inner mean Y_0 estimates.
  std::vector<double> y0InnerSd;
  int inner = 0;
  /// [outer][step][k]; steps 0..N-1.
  std::vector<std::vector<std::vector<double>>> coefY, coefZ;
  std::vector<double> conditionNumbers;  // per step, of the ridged Gram matrix
};

/// Regression scheme conditional on each outer B path.
MCSolution solveLSMC(const DriverSpec& driver, const TerminalSpec& terminal, const BasisSpec& basis,
                     const PathBatch& paths, Exec exec = Exec::Parallel);

struct MCReport {
  double meanY0 = 0.0;
  double varianceY0 = 0.0;      // across outer paths (0 for one path)
  double outerCiHalfWidth = 0.0;  // 1.96 sd / sqrt(outer)
  double innerCiHalfWidth = 0.0;  // mean over outer of 1.96 sd_inner / sqrt(inner)
  double innerStdError = 0.0;     // mean over outer of sd_inner / sqrt(inner)
  std::vector<double> conditionNumbers;
};

MCReport mcDiagnostics(const MCSolution& sol);

}  // namespace bdsde
