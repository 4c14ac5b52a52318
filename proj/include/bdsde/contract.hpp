#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bdsde/driver.hpp"

namespace bdsde {

enum class Verdict { Pass, Fail, NotChecked };

std::string_view verdictName(Verdict v);

/// Two probe points and both function values; enough to reproduce the
/// violation by hand.
struct Witness {
  std::string assumption;
  double t = 0.0;
  double y1 = 0.0, z1 = 0.0, y2 = 0.0, z2 = 0.0;
  double v1 = 0.0, v2 = 0.0;
  double quotient = 0.0;  // the offending ratio or bound excess
};

struct ContractReport {
  double estimatedLipF = 0.0;     // max |df| / (|dy| + |dz|)
  double estimatedLipFz = 0.0;    // same, over z-only pairs
  double estimatedLipGy = 0.0;    // max |dg| / |dy| over y-only pairs
  double estimatedLipGzSq = 0.0;  // max |dg|^2 / |dz|^2 over z-only pairs
  std::vector<Witness> violations;
  std::map<std::string, Verdict> verdicts;  // keys "f_lipschitz".."f_linear_growth", "f_lipschitz_z".."f_equicontinuous"
  std::uint64_t seed = 0;
  double slack = 1.0;

  bool passed(const std::string& assumption) const;
};

/// Empirical refutation of the declared driver metadata. Probes are paired
/// (y-only, z-only, joint, and a fixed family of pairs straddling the
/// origin) inside the ball of the given radius; t is drawn from [0, horizon].
/// Deterministic for a fixed seed. Report-only: never throws on violations.
ContractReport checkDriverContract(const DriverSpec& driver, int probeCount, double radius,
                                   std::uint64_t seed, double slack = 1.0 + 1e-9,
                                   double horizon = 1.0);

/// Max change of the terminal value when any single B increment of a random
/// path is perturbed. The terminal sees W increments only, so this is 0.
double terminalBSensitivity(const TerminalSpec& terminal, int steps, int probes,
                            std::uint64_t seed);

}  // namespace bdsde
