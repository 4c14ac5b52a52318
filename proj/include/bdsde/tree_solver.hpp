#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/parallel.hpp"
#include "bdsde/solution.hpp"

namespace bdsde {

struct TreeOptions {
  Exec exec = Exec::Parallel;
  /// Nonzero: visit nodes in a shuffled order. Output must not change.
  std::uint64_t permutationSeed = 0;
};

/// dt * LipF + sqrt(dt) * (gLipY + sqrt(gLipZsq)); NaN when f has no
/// declared Lipschitz constant.
double stabilityIndicator(const DriverSpec& driver, const TimeGrid& grid);

/// Fills steps iEnd-1 .. 0 of a Tree-layout solution whose Y and Z are set
/// at step iEnd. Explicit scheme: f and g at (t_{i+1}, Y_{i+1}, Z_{i+1}).
void backwardSweep(Solution& sol, const DriverSpec& driver, int iEnd, const TreeOptions& opt = {});

/// Exact discrete solve on the binary tree, N <= 20.
Solution solveTree(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid,
                   const TreeOptions& opt = {});

/// Deterministic specialization: g = 0 and a constant terminal. One node
/// per step, Z = 0, any N up to the grid cap.
Solution solveScalar(const DriverSpec& driver, const TerminalSpec& terminal, const TimeGrid& grid);

/// z = hInv(t, y, ztilde) inverts ztilde = g(t, y, z) in z.
using InverseFn = std::function<double(double t, double y, double ztilde)>;

struct ForwardOptions {
  Exec exec = Exec::Parallel;
  /// Throw on the first node where the inverse or the implicit y-solve
  /// fails. Otherwise the node (and everything downstream) is NaN.
  bool strict = true;
  double inverseTol = 1e-8;
  /// Z at step i0; empty means 0.
  std::vector<double> zStart;
};

/// Forward solve of the swapped equation from eta at step i0.
///
/// Each step inverts the backward scheme exactly: from Y_j and Z_j at the two
/// B signs of a node pair, the one-step identity
///   Y_j + Z_j dW_j = P(s) + G(s) dB_j
/// determines P(s) = Y_{j+1} + dt f and G(s) = g at step j+1 for both W
/// signs. Z_{j+1} = hInv(G) and Y_{j+1} solves y + dt f(t, y, hInv(t, y, G)) = P.
/// Z at step i0 is opt.zStart (default 0). The field lives on the Tree
/// layout, so the segment depends on (W past, B future) only.
struct ForwardSegment {
  int i0 = 0;
  Solution field;                    // Tree layout; steps < i0 are unused
  std::vector<std::vector<double>> gImage;  // G at steps i0+1..N (index j)
  double inverseResidual = 0.0;      // max |g(hInv(G)) - G|
  std::size_t failedNodes = 0;
  /// Max change of Y over steps j >= i0 when coordinate k is flipped; the
  /// coordinate is s_k on steps j > k and r_k on steps j <= k.
  std::vector<double> sensitivity;
};

ForwardSegment solveForwardSwapped(const DriverSpec& driver, const InverseFn& hInv,
                                   const std::vector<double>& eta, const TimeGrid& grid, int i0,
                                   const ForwardOptions& opt = {});

/// Max residual of the discrete equation on steps i0..N-1 of a segment.
double forwardResidual(const ForwardSegment& seg, const DriverSpec& driver);

/// Root of y + dt * f(t, y, zOf(y)) = target by bracketing and TOMS 748.
/// Returns NaN if no bracket is found.
double solveImplicit(const std::function<double(double)>& phi, double target, double guess);

}  // namespace bdsde
