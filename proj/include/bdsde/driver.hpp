#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bdsde {

/// A scalar coefficient (t, y, z) -> value. Only d = l = 1 is supported, so
/// z and the g-image are scalars.
using ScalarFn = std::function<double(double t, double y, double z)>;

/// Catalog entry reference: a name plus its numeric parameters.
struct CatalogRef {
  std::string name;
  std::vector<double> params;

  std::string str() const;
  friend bool operator==(const CatalogRef&, const CatalogRef&) = default;
};

/// The coefficient pair (f, g) with declared regularity metadata.
///
/// Constants follow the ell-1 convention used by the regularization
/// operators: fLipschitz bounds |f(p) - f(q)| / (|dy| + |dz|). For g,
/// gLipY bounds |dg| / |dy| and gLipZsq is the alpha of
/// |dg|^2 <= gLipY^2 |dy|^2 + alpha |dz|^2.
struct DriverSpec {
  ScalarFn f;
  ScalarFn g;
  CatalogRef fRef;
  CatalogRef gRef;

  std::optional<double> growthK;  // |f| <= |f(t,0,0)| + K|y| + K|z|
  std::optional<double> growthD;  // |f(t,0,0)| <= D
  std::optional<double> fLipschitz;
  double gLipY = 0.0;
  double gLipZsq = 0.0;

  // Structural facts used by the regularization lattice and the scalar
  // backend. User-supplied drivers keep the conservative defaults.
  bool fDependsOnY = true;
  bool fDependsOnZ = true;
  bool timeHomogeneous = false;
  bool gIsZero = false;

  std::string descriptor() const;
};

/// Throws AssumptionViolation if gLipZsq >= 1, Precondition if neither a
/// Lipschitz constant nor linear-growth constants are declared.
void validateDriver(const DriverSpec& driver);

/// Terminal condition as a function of the W increments only.
struct TerminalSpec {
  std::function<double(std::span<const double> wIncrements)> evaluate;
  CatalogRef ref;
  std::optional<double> boundC0;
  std::optional<double> constantValue;  // set when the terminal is deterministic

  bool deterministic() const { return constantValue.has_value(); }
  std::string descriptor() const { return ref.str(); }
};

struct CatalogEntry {
  std::string name;
  int arity;
  std::string formula;
};

const std::vector<CatalogEntry>& fCatalog();
const std::vector<CatalogEntry>& gCatalog();
const std::vector<CatalogEntry>& terminalCatalog();

/// Builds the full driver from an f-part and a g-part catalog reference.
/// The f-part also accepts the alias "zero" (f = 0).
DriverSpec builtinDriver(const CatalogRef& fPart, const CatalogRef& gPart);
DriverSpec builtinDriver(const std::string& fName, std::vector<double> fParams,
                         const std::string& gName = "g_zero", std::vector<double> gParams = {});

TerminalSpec builtinTerminal(const CatalogRef& ref);
TerminalSpec builtinTerminal(const std::string& name, std::vector<double> params = {});

/// The f coefficient detached from g, with the metadata the regularization
/// operators need.
struct DriverPart {
  ScalarFn fn;
  std::string label;
  std::optional<double> lipschitz;
  std::optional<double> growthK;
  std::optional<double> growthD;
  bool dependsOnY = true;
  bool dependsOnZ = true;
  bool timeHomogeneous = false;

  double operator()(double t, double y, double z) const { return fn(t, y, z); }
};

DriverPart fPartOf(const DriverSpec& driver);

/// Same g, new f. All f metadata is taken from the part.
DriverSpec withFPart(const DriverSpec& base, const DriverPart& part);

}  // namespace bdsde
