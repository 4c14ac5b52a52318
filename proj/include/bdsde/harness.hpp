#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/envelope.hpp"
#include "bdsde/solution.hpp"

namespace bdsde {

struct Problem {
  DriverSpec driver;
  TerminalSpec terminal;
};

/// Lipschitz: direct solves. Envelope: both envelopes, minimal against
/// minimal and maximal against maximal. Separating: direct solves plus the
/// mollified driver between them, Y1 >= Yb >= Y2.
enum class ComparisonKind { Lipschitz, Envelope, Separating };

std::string_view comparisonKindName(ComparisonKind kind);

/// Claim: Y of `upper` dominates Y of `lower` at every node.
struct ComparisonCase {
  std::string name;
  Problem upper;
  Problem lower;
  ComparisonKind kind = ComparisonKind::Lipschitz;
  TimeGrid grid;
  Backend backend = Backend::Tree;
  /// NaN means 1e-9 + 10 dt (1 + sup |Y|).
  double tol = std::numeric_limits<double>::quiet_NaN();
  int premiseProbes = 10000;
  std::uint64_t seed = 1;
  EnvelopeOptions envelope;
  double epsBar = 0.0;        // separating: f1 - f2 >= epsBar
  double mollifyDelta = 0.05;  // separating
};

struct PremiseReport {
  bool holds = true;
  int probes = 0;
  double driverGap = std::numeric_limits<double>::infinity();    // min f1 - f2
  double terminalGap = std::numeric_limits<double>::infinity();  // min xi1 - xi2
  double gMismatch = 0.0;                                         // max |g1 - g2|
  std::string witness;
  std::uint64_t boxHits = 0;  // probes on the edge of the probe box
};

/// Probes f in t in [0, T], y and z in [-10 C0, 10 C0] (C0 = max(1, declared
/// terminal bounds)); terminals at every leaf for N <= 14, else at 10^4
/// Gaussian paths. g must agree on both sides.
PremiseReport checkPremise(const ComparisonCase& c);

struct ComparisonReport {
  std::string name;
  ComparisonKind kind = ComparisonKind::Lipschitz;
  PremiseReport premise;
  double tol = 0.0;
  double worstMargin = std::numeric_limits<double>::infinity();  // min of Y1 - Y2 over every compared pair
  int worstStep = -1;
  std::size_t worstNode = 0;
  std::vector<double> margins;  // Lipschitz: {Y1-Y2}; Envelope: {min, max}; Separating: {Y1-Yb, Yb-Y2}
  bool guardOk = true;
  bool pass = false;
};

/// Throws Premise (with witness) if the premise fails, Scheme if a declared
/// Lipschitz driver violates the stability guard.
ComparisonReport compareSolutions(const ComparisonCase& c);

struct SuiteReport {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<ComparisonReport> cases;
  std::vector<std::string> rejected;  // premise failures caught by the checker
  int passed() const;
  int failed() const;
  double worstMargin() const;
};

/// count randomized Lipschitz pairs: f1 = f2 + |perturbation|, xi1 = xi2 + c.
SuiteReport lipschitzSuite(int count, std::uint64_t seed, int N = 12);
/// sqrt-family envelope pairs on the tree and the scalar backend.
SuiteReport envelopeSuite(int N = 10);
/// sqrt-family pairs separated by a mollified driver.
SuiteReport separatingSuite(int N = 10);
/// Cases whose premise is false; every one should land in `rejected`.
SuiteReport premiseControlSuite();

/// Columns name,kind,premise,worstMargin,tol,pass.
void writeSuiteCsv(const SuiteReport& suite, std::ostream& out);
/// Columns suite,seed,cases,passed,failed,rejected,worstMargin.
void writeSuiteSummary(const std::vector<SuiteReport>& suites, std::ostream& out);

struct ErrorRow {
  int N = 0;
  double error = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();  // previous error / this error
};

struct ErrorTable {
  std::string caseId;
  std::string backend;
  std::vector<ErrorRow> rows;
};

/// Registered closed forms: "linear_growth" (f = y, xi = 1, Y_0 = e),
/// "additive_noise" (g = 1, Y_0 = B_T), "martingale" (xi = W_T, Y_0 = 0,
/// Z = 1). Backends "tree", "scalar", "mc".
const std::vector<std::string>& closedFormCases();
ErrorTable convergenceStudy(const std::string& caseId, const std::vector<int>& Ns, const std::string& backend,
                            std::uint64_t seed = 1);

/// Columns N,error,ratio.
void writeErrorTableCsv(const ErrorTable& table, std::ostream& out);

enum class LimitMode { Last, Extrapolate };

struct ClosednessReport {
  double residual = 0.0;  // discrete residual of the limit candidate (terminal included)
  int step = -1;
  std::size_t node = 0;
  std::vector<double> successiveDistances;  // sup distances between consecutive elements
  bool pass = false;
  Solution candidate;
};

/// Limit candidate of a converging sequence of solution fields: the last
/// element, or 2 * last - previous for geometrically halving parameters.
ClosednessReport closednessCheck(const std::vector<Solution>& sequence, const DriverSpec& driver,
                                 const TerminalSpec& terminal, double tol, LimitMode mode = LimitMode::Last);

}  // namespace bdsde
