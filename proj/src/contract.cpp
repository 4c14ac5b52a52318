#include "bdsde/contract.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bdsde/error.hpp"

namespace bdsde {

std::string_view verdictName(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::NotChecked: return "not-checked";
  }
  return "?";
}

bool ContractReport::passed(const std::string& assumption) const {
  auto it = verdicts.find(assumption);
  return it != verdicts.end() && it->second != Verdict::Fail;
}

namespace {

struct PairSample {
  double t, y1, z1, y2, z2;
};

struct Tracker {
  double best = 0.0;
  Witness witness;
  bool seen = false;

  void offer(double q, const PairSample& p, double v1, double v2, const char* name) {
    if (!std::isfinite(q)) q = std::numeric_limits<double>::infinity();
    if (!seen || q > best) {
      best = q;
      witness = Witness{name, p.t, p.y1, p.z1, p.y2, p.z2, v1, v2, q};
      seen = true;
    }
  }
};

}  // namespace

ContractReport checkDriverContract(const DriverSpec& driver, int probeCount, double radius,
                                   std::uint64_t seed, double slack, double horizon) {
  require(probeCount >= 2, ErrorKind::InvalidArgument, "probeCount must be >= 2");
  require(radius > 0.0, ErrorKind::InvalidArgument, "radius must be > 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> time(0.0, horizon);
  std::uniform_int_distribution<int> decade(0, 8);

  auto ballPoint = [&](double& y, double& z) {
    do {
      y = unit(rng);
      z = unit(rng);
    } while (y * y + z * z > 1.0);
    y *= radius;
    z *= radius;
  };
  auto nearby = [&](double x) { return x + radius * std::pow(10.0, -decade(rng)) * unit(rng); };

  std::vector<PairSample> yPairs, zPairs, jointPairs;
  for (int k = 0; k < probeCount; ++k) {
    PairSample p{};
    p.t = time(rng);
    ballPoint(p.y1, p.z1);
    yPairs.push_back({p.t, p.y1, p.z1, nearby(p.y1), p.z1});
    zPairs.push_back({p.t, p.y1, p.z1, p.y1, nearby(p.z1)});
    PairSample q{};
    q.t = p.t;
    q.y1 = p.y1;
    q.z1 = p.z1;
    ballPoint(q.y2, q.z2);
    jointPairs.push_back(q);
  }
  // Symmetric pairs around the origin catch kinks and cusps at 0.
  for (int k = 1; k <= 40; ++k) {
    const double h = radius * std::ldexp(1.0, -k);
    yPairs.push_back({0.0, -h, 0.0, h, 0.0});
    zPairs.push_back({0.0, 0.0, -h, 0.0, h});
  }

  Tracker lipF, lipFz, lipGy, lipGzSq, h2Joint, growth;
  std::vector<Witness> growthWitnesses;
  bool allFinite = true;

  const double K = driver.growthK.value_or(0.0);
  const double D = driver.growthD.value_or(0.0);
  const double C = driver.gLipY;
  const double alpha = driver.gLipZsq;

  auto visit = [&](const PairSample& p, bool yOnly, bool zOnly) {
    const double f1 = driver.f(p.t, p.y1, p.z1), f2 = driver.f(p.t, p.y2, p.z2);
    const double g1 = driver.g(p.t, p.y1, p.z1), g2 = driver.g(p.t, p.y2, p.z2);
    allFinite = allFinite && std::isfinite(f1) && std::isfinite(f2) && std::isfinite(g1) &&
                std::isfinite(g2);
    const double dy = std::abs(p.y1 - p.y2), dz = std::abs(p.z1 - p.z2);
    if (dy + dz > 0.0) {
      lipF.offer(std::abs(f1 - f2) / (dy + dz), p, f1, f2, "f_lipschitz");
      if (zOnly) lipFz.offer(std::abs(f1 - f2) / dz, p, f1, f2, "f_lipschitz_z");
    }
    const double dg = std::abs(g1 - g2);
    if (yOnly && dy > 0.0) lipGy.offer(dg / dy, p, g1, g2, "g_contraction");
    if (zOnly && dz > 0.0) lipGzSq.offer(dg * dg / (dz * dz), p, g1, g2, "g_contraction");
    if (!yOnly && !zOnly) {
      const double bound = C * C * dy * dy + alpha * dz * dz;
      h2Joint.offer(dg * dg - bound * slack, p, g1, g2, "g_contraction");
    }
    if (driver.growthK) {
      for (int side = 0; side < 2; ++side) {
        const double y = side ? p.y2 : p.y1, z = side ? p.z2 : p.z1, v = side ? f2 : f1;
        const double f0 = driver.f(p.t, 0.0, 0.0);
        const double excess = std::abs(v) - (std::max(D, std::abs(f0)) + K * std::abs(y) + K * std::abs(z)) * slack;
        PairSample w{p.t, y, z, 0.0, 0.0};
        growth.offer(excess, w, v, f0, "f_linear_growth");
        if (excess > 0.0 && growthWitnesses.size() < 16)
          growthWitnesses.push_back(Witness{"f_linear_growth", p.t, y, z, 0.0, 0.0, v, f0, excess});
      }
    }
  };
  for (const auto& p : yPairs) visit(p, true, false);
  for (const auto& p : zPairs) visit(p, false, true);
  for (const auto& p : jointPairs) visit(p, false, false);

  ContractReport report;
  report.seed = seed;
  report.slack = slack;
  report.estimatedLipF = lipF.best;
  report.estimatedLipFz = lipFz.best;
  report.estimatedLipGy = lipGy.best;
  report.estimatedLipGzSq = lipGzSq.best;

  auto judge = [&](const std::string& name, bool ok, const Tracker& worst) {
    report.verdicts[name] = ok ? Verdict::Pass : Verdict::Fail;
    if (!ok && worst.seen) report.violations.push_back(worst.witness);
  };

  if (driver.fLipschitz) {
    judge("f_lipschitz", lipF.best <= *driver.fLipschitz * slack, lipF);
    judge("f_lipschitz_z", lipFz.best <= *driver.fLipschitz * slack, lipFz);
  } else {
    report.verdicts["f_lipschitz"] = Verdict::NotChecked;
    report.verdicts["f_lipschitz_z"] = Verdict::NotChecked;
  }

  const bool h2 = alpha < 1.0 && lipGy.best <= C * slack && lipGzSq.best <= alpha * slack &&
                  h2Joint.best <= 0.0;
  report.verdicts["g_contraction"] = h2 ? Verdict::Pass : Verdict::Fail;
  if (!h2) {
    for (const Tracker* t : {&lipGy, &lipGzSq, &h2Joint})
      if (t->seen) report.violations.push_back(t->witness);
  }

  report.verdicts["finite_values"] = allFinite ? Verdict::Pass : Verdict::Fail;

  if (driver.growthK && driver.growthD) {
    const bool ok = growthWitnesses.empty();
    report.verdicts["f_linear_growth"] = ok ? Verdict::Pass : Verdict::Fail;
    for (auto& w : growthWitnesses) report.violations.push_back(w);
  } else {
    report.verdicts["f_linear_growth"] = driver.fLipschitz ? Verdict::NotChecked : Verdict::Fail;
  }

  report.verdicts["f_local_lipschitz"] = Verdict::NotChecked;
  report.verdicts["terminal_bounded"] = Verdict::NotChecked;
  report.verdicts["f_equicontinuous"] = Verdict::NotChecked;
  return report;
}

double terminalBSensitivity(const TerminalSpec& terminal, int steps, int probes,
                            std::uint64_t seed) {
  require(steps >= 1 && probes >= 1, ErrorKind::InvalidArgument, "steps and probes must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // A full path carries both noises; the terminal is handed the W part only.
  auto evaluatePath = [&](const std::vector<double>& w, const std::vector<double>&) {
    return terminal.evaluate(w);
  };
  double worst = 0.0;
  std::vector<double> w(steps), b(steps);
  for (int p = 0; p < probes; ++p) {
    for (int i = 0; i < steps; ++i) {
      w[i] = normal(rng);
      b[i] = normal(rng);
    }
    const double base = evaluatePath(w, b);
    for (int i = 0; i < steps; ++i) {
      const double keep = b[i];
      b[i] += 1.0 + normal(rng);
      worst = std::max(worst, std::abs(evaluatePath(w, b) - base));
      b[i] = keep;
    }
  }
  return worst;
}

}  // namespace bdsde
