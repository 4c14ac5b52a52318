#include "bdsde/grid.hpp"

#include <cmath>
#include <string>

#include "bdsde/error.hpp"

namespace bdsde {

TimeGrid makeGrid(double horizonT, int steps) {
  require(std::isfinite(horizonT) && horizonT > 0.0, ErrorKind::InvalidArgument,
          "horizon must be positive, got " + std::to_string(horizonT));
  require(steps >= 1, ErrorKind::InvalidArgument,
          "steps must be >= 1, got " + std::to_string(steps));
  require(steps <= kMaxGridSteps, ErrorKind::Capacity,
          "steps " + std::to_string(steps) + " exceeds cap " + std::to_string(kMaxGridSteps));
  TimeGrid g;
  g.horizon_ = horizonT;
  g.steps_ = steps;
  g.dt_ = horizonT / steps;
  g.sqrtDt_ = std::sqrt(g.dt_);
  return g;
}

}  // namespace bdsde
