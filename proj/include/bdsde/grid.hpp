#pragma once

#include <cstdint>

namespace bdsde {

inline constexpr int kMaxGridSteps = 1 << 20;

/// Uniform partition of [0, T].
class TimeGrid {
 public:
  TimeGrid() = default;

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double dt() const { return dt_; }
  double sqrtDt() const { return sqrtDt_; }

  /// Node i; t(steps()) is exactly the horizon.
  double t(int i) const { return i == steps_ ? horizon_ : i * dt_; }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
  }

 private:
  friend TimeGrid makeGrid(double horizonT, int steps);

  double horizon_ = 1.0;
  int steps_ = 1;
  double dt_ = 1.0;
  double sqrtDt_ = 1.0;
};

TimeGrid makeGrid(double horizonT, int steps);

}  // namespace bdsde
