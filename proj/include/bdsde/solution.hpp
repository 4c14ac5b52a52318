#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/grid.hpp"

namespace bdsde {

/// Node layouts of a solution field.
///
/// Tree: 2^N nodes at every step. At step i, bit k of the node index is the
/// W sign s_k for k < i and the B sign r_k for k >= i (bit set = +1), i.e. a
/// node is (W history, B future) and nothing else.
///
/// Extended(i0): Tree for steps <= i0; for j > i0 the B signs r_{i0..j-1}
/// are appended, r_m at bit N + (m - i0), giving 2^(N + j - i0) nodes.
/// Needed when a field depends on B increments that are already in the past
/// (the glued solution after its stopping time).
///
/// Scalar: one node per step (deterministic specialization, Z = 0).
enum class Layout { Scalar, Tree, Extended };

inline constexpr int kMaxTreeSteps = 20;
inline constexpr std::size_t kMaxExtendedNodes = std::size_t{1} << 24;

struct Solution {
  TimeGrid grid;
  Layout layout = Layout::Tree;
  int splitIndex = 0;  // i0 for Extended
  std::vector<std::vector<double>> Y;  // steps 0..N
  std::vector<std::vector<double>> Z;  // steps 0..N, Z_N = 0
  std::vector<std::string> warnings;

  int steps() const { return grid.steps(); }
  std::size_t nodes(int i) const { return Y.at(i).size(); }
  double maxAbsY() const;
  double maxAbsZ() const;
};

/// Node count of a layout at step i.
std::size_t layoutNodes(Layout layout, int N, int i0, int i);

/// Index at step i + 1 reached from node e at step i by W sign s (0 or 1).
std::size_t successor(Layout layout, int N, int i0, int i, std::size_t e, int s);

/// B sign r_i (0 or 1) carried by node e at step i.
inline int bSign(Layout layout, int i, std::size_t e) {
  return layout == Layout::Scalar ? 0 : static_cast<int>((e >> i) & 1U);
}

/// The tree node at step i seen by an extended node (drops the B past).
inline std::size_t treeIndex(Layout layout, int N, std::size_t e) {
  if (layout == Layout::Scalar) return 0;
  return e & ((std::size_t{1} << N) - 1);
}

/// Shape check against grid and layout; throws InvalidArgument.
void validateShape(const Solution& sol);

/// Allocates Y, Z with the node counts of the layout.
Solution makeSolution(const TimeGrid& grid, Layout layout, int splitIndex = 0);

/// Y_i - [Y_{i+1} + dt f + g dB - Z_i dW] for one node and W sign; f and g
/// are evaluated at (t_{i+1}, Y_{i+1}, Z_{i+1}).
double stepResidual(const Solution& sol, const DriverSpec& driver, int i, std::size_t e, int s);

struct ResidualReport {
  double maxResidual = 0.0;
  int worstStep = -1;
  std::size_t worstNode = 0;
  int worstSign = 0;
  double terminalMismatch = 0.0;  // max |Y_N - xi| over leaves
  std::vector<double> perStep;    // max residual per step 0..N-1
};

ResidualReport residualReport(const Solution& sol, const DriverSpec& driver,
                              const TerminalSpec& terminal);

/// Max over steps, paths and the terminal of the discrete equation residual.
double treeResidual(const Solution& sol, const DriverSpec& driver, const TerminalSpec& terminal);

/// Terminal value at a leaf of a Tree or Extended layout.
double terminalAt(const TerminalSpec& terminal, const TimeGrid& grid, std::size_t leaf);

struct NodeSummary {
  double mean = 0.0, min = 0.0, max = 0.0, meanSquare = 0.0;
};

/// Uniform product measure over the nodes of step i.
NodeSummary expectationAt(const Solution& sol, int i);

/// sup over steps of the mean square of Y (S^2 diagnostic).
double s2Norm(const Solution& sol);
/// dt-weighted sum over steps of the mean square of a - b for the Z fields
/// (M^2 diagnostic); layouts must match.
double m2DistanceZ(const Solution& a, const Solution& b);
/// max |a.Y - b.Y| over all steps and nodes; layouts must match.
double supDistance(const Solution& a, const Solution& b);

/// Binary dump, little-endian:
///   char[8] "BDSDETRE", u32 version (1), i32 N, f64 T, f64 dt, u32 layout,
///   i32 splitIndex, u32 descriptor length, descriptor bytes, then for each
///   step i = 0..N: u64 node count, f64 Y[count], f64 Z[count].
void writeBinary(const Solution& sol, const std::string& descriptor, std::ostream& out);
Solution readBinary(std::istream& in, std::string* descriptor = nullptr);

/// Per-step summary CSV: step,t,Y_mean,Y_min,Y_max,Y_meansq.
void writeSummaryCsv(const Solution& sol, std::ostream& out);

/// Formats a double with 17 significant digits.
std::string fmt17(double v);

}  // namespace bdsde
