#include "bdsde/driver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bdsde/error.hpp"

namespace bdsde {

namespace {

void checkArity(const CatalogRef& ref, std::size_t arity) {
  require(ref.params.size() == arity, ErrorKind::Catalog,
          "'" + ref.name + "' expects " + std::to_string(arity) + " parameter(s), got " +
              std::to_string(ref.params.size()));
  for (double p : ref.params)
    require(std::isfinite(p), ErrorKind::Catalog, "'" + ref.name + "' has a non-finite parameter");
}

double terminalSum(std::span<const double> w) {
  return std::accumulate(w.begin(), w.end(), 0.0);
}

}  // namespace

std::string CatalogRef::str() const {
  std::ostringstream os;
  os.precision(17);
  os << name << '(';
  for (std::size_t i = 0; i < params.size(); ++i) os << (i ? "," : "") << params[i];
  os << ')';
  return os.str();
}

std::string DriverSpec::descriptor() const { return "f=" + fRef.str() + ";g=" + gRef.str(); }

void validateDriver(const DriverSpec& driver) {
  require(static_cast<bool>(driver.f) && static_cast<bool>(driver.g), ErrorKind::InvalidArgument,
          "driver has an empty coefficient");
  require(driver.gLipZsq >= 0.0 && driver.gLipZsq < 1.0, ErrorKind::AssumptionViolation,
          "g must be a contraction in z: 0 <= alpha < 1 is required for the z-Lipschitz constant of g, got alpha = " +
              std::to_string(driver.gLipZsq));
  require(driver.gLipY >= 0.0, ErrorKind::InvalidArgument, "gLipY must be >= 0");
  if (!driver.fLipschitz) {
    require(driver.growthK.has_value() && driver.growthD.has_value(), ErrorKind::Precondition,
            "non-Lipschitz f needs linear-growth constants K and D");
  }
}

const std::vector<CatalogEntry>& fCatalog() {
  static const std::vector<CatalogEntry> entries = {
      {"zero", 0, "f = 0"},
      {"f_constant", 1, "f = c"},
      {"f_linear", 2, "f = a_y*y + a_z*z"},
      {"f_sqrt_pos", 1, "f = c*sqrt(max(y,0))"},
  };
  return entries;
}

const std::vector<CatalogEntry>& gCatalog() {
  static const std::vector<CatalogEntry> entries = {
      {"g_zero", 0, "g = 0"},
      {"g_constant", 1, "g = gamma"},
      {"g_linear", 1, "g = beta*z  (|beta| < 1)"},
      {"g_sine", 2, "g = beta*z + amp*sin(y)  (|beta| < 1)"},
  };
  return entries;
}

const std::vector<CatalogEntry>& terminalCatalog() {
  static const std::vector<CatalogEntry> entries = {
      {"constant", 1, "xi = c"},
      {"w_terminal", 0, "xi = W_T"},
      {"w_terminal_sq", 0, "xi = W_T^2"},
      {"call", 1, "xi = max(W_T - k, 0)"},
      {"w_terminal_pos", 0, "xi = max(W_T, 0)"},
  };
  return entries;
}

namespace {

DriverPart builtinF(const CatalogRef& ref) {
  DriverPart part;
  part.label = ref.str();
  part.timeHomogeneous = true;
  if (ref.name == "zero") {
    checkArity(ref, 0);
    part.fn = [](double, double, double) { return 0.0; };
    part.lipschitz = 0.0;
    part.growthK = 0.0;
    part.growthD = 0.0;
    part.dependsOnY = part.dependsOnZ = false;
  } else if (ref.name == "f_constant") {
    checkArity(ref, 1);
    const double c = ref.params[0];
    part.fn = [c](double, double, double) { return c; };
    part.lipschitz = 0.0;
    part.growthK = 0.0;
    part.growthD = std::abs(c);
    part.dependsOnY = part.dependsOnZ = false;
  } else if (ref.name == "f_linear") {
    checkArity(ref, 2);
    const double ay = ref.params[0], az = ref.params[1];
    part.fn = [ay, az](double, double y, double z) { return ay * y + az * z; };
    const double lip = std::max(std::abs(ay), std::abs(az));
    part.lipschitz = lip;
    part.growthK = lip;
    part.growthD = 0.0;
    part.dependsOnY = ay != 0.0;
    part.dependsOnZ = az != 0.0;
  } else if (ref.name == "f_sqrt_pos") {
    checkArity(ref, 1);
    const double c = ref.params[0];
    require(c >= 0.0, ErrorKind::Catalog, "f_sqrt_pos needs c >= 0");
    part.fn = [c](double, double y, double) { return c * std::sqrt(std::max(y, 0.0)); };
    // c*sqrt(y+) <= c + c|y|; continuous but not Lipschitz at y = 0.
    if (c == 0.0) part.lipschitz = 0.0;
    part.growthK = c;
    part.growthD = c;
    part.dependsOnY = c != 0.0;
    part.dependsOnZ = false;
  } else {
    fail(ErrorKind::Catalog, "unknown f-part '" + ref.name + "'");
  }
  return part;
}

void applyG(DriverSpec& d, const CatalogRef& ref) {
  d.gRef = ref;
  if (ref.name == "g_zero") {
    checkArity(ref, 0);
    d.g = [](double, double, double) { return 0.0; };
    d.gIsZero = true;
  } else if (ref.name == "g_constant") {
    checkArity(ref, 1);
    const double gamma = ref.params[0];
    d.g = [gamma](double, double, double) { return gamma; };
    d.gIsZero = gamma == 0.0;
  } else if (ref.name == "g_linear") {
    checkArity(ref, 1);
    const double beta = ref.params[0];
    require(std::abs(beta) < 1.0, ErrorKind::AssumptionViolation,
            "g_linear(" + std::to_string(beta) +
                ") is not a contraction in z: alpha = beta^2 must satisfy alpha < 1");
    d.g = [beta](double, double, double z) { return beta * z; };
    d.gLipZsq = beta * beta;
    d.gIsZero = beta == 0.0;
  } else if (ref.name == "g_sine") {
    checkArity(ref, 2);
    const double beta = ref.params[0], amp = ref.params[1];
    require(std::abs(beta) < 1.0, ErrorKind::AssumptionViolation,
            "g_sine(" + std::to_string(beta) +
                ", amp) is not a contraction in z: alpha = beta^2 must satisfy alpha < 1");
    d.g = [beta, amp](double, double y, double z) { return beta * z + amp * std::sin(y); };
    d.gLipY = std::abs(amp);
    d.gLipZsq = beta * beta;
    d.gIsZero = beta == 0.0 && amp == 0.0;
  } else {
    fail(ErrorKind::Catalog, "unknown g-part '" + ref.name + "'");
  }
}

}  // namespace

DriverPart fPartOf(const DriverSpec& driver) {
  DriverPart part;
  part.fn = driver.f;
  part.label = driver.fRef.str();
  part.lipschitz = driver.fLipschitz;
  part.growthK = driver.growthK;
  part.growthD = driver.growthD;
  part.dependsOnY = driver.fDependsOnY;
  part.dependsOnZ = driver.fDependsOnZ;
  part.timeHomogeneous = driver.timeHomogeneous;
  return part;
}

DriverSpec withFPart(const DriverSpec& base, const DriverPart& part) {
  DriverSpec d = base;
  d.f = part.fn;
  d.fRef = CatalogRef{part.label, {}};
  d.fLipschitz = part.lipschitz;
  d.growthK = part.growthK;
  d.growthD = part.growthD;
  d.fDependsOnY = part.dependsOnY;
  d.fDependsOnZ = part.dependsOnZ;
  d.timeHomogeneous = part.timeHomogeneous;
  return d;
}

DriverSpec builtinDriver(const CatalogRef& fPart, const CatalogRef& gPart) {
  DriverSpec d;
  applyG(d, gPart);
  d = withFPart(d, builtinF(fPart));
  d.fRef = fPart;
  validateDriver(d);
  return d;
}

DriverSpec builtinDriver(const std::string& fName, std::vector<double> fParams,
                         const std::string& gName, std::vector<double> gParams) {
  return builtinDriver(CatalogRef{fName, std::move(fParams)}, CatalogRef{gName, std::move(gParams)});
}

TerminalSpec builtinTerminal(const CatalogRef& ref) {
  TerminalSpec term;
  term.ref = ref;
  if (ref.name == "constant") {
    checkArity(ref, 1);
    const double c = ref.params[0];
    term.evaluate = [c](std::span<const double>) { return c; };
    term.boundC0 = std::abs(c);
    term.constantValue = c;
  } else if (ref.name == "w_terminal") {
    checkArity(ref, 0);
    term.evaluate = [](std::span<const double> w) { return terminalSum(w); };
  } else if (ref.name == "w_terminal_sq") {
    checkArity(ref, 0);
    term.evaluate = [](std::span<const double> w) {
      const double s = terminalSum(w);
      return s * s;
    };
  } else if (ref.name == "call") {
    checkArity(ref, 1);
    const double k = ref.params[0];
    term.evaluate = [k](std::span<const double> w) { return std::max(terminalSum(w) - k, 0.0); };
  } else if (ref.name == "w_terminal_pos") {
    checkArity(ref, 0);
    term.evaluate = [](std::span<const double> w) { return std::max(terminalSum(w), 0.0); };
  } else {
    fail(ErrorKind::Catalog, "unknown terminal '" + ref.name + "'");
  }
  return term;
}

TerminalSpec builtinTerminal(const std::string& name, std::vector<double> params) {
  return builtinTerminal(CatalogRef{name, std::move(params)});
}

}  // namespace bdsde
