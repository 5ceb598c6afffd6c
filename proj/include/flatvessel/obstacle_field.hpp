// Copyright 2026 The flatvessel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLATVESSEL_OBSTACLE_FIELD_HPP
#define FLATVESSEL_OBSTACLE_FIELD_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "flatvessel/errors.hpp"

namespace flatvessel {

/// Constant-velocity motion starting at `t_start`; the shape rests at its
/// nominal center before that.
struct ShapeMotion {
  double t_start = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

/// Rounded rectangle / ellipse. f <= 1 marks the occupied area; `a` = 1 gives
/// an ellipse and larger values sharpen the corners.
struct BasicShape {
  double xo = 0.0, yo = 0.0;
  double dx = 1.0, dy = 1.0;
  double alpha = 0.0;  // rad
  int a = 1;
  std::optional<ShapeMotion> motion;

  void validate() const {
    if (!(dx > 0.0) || !std::isfinite(dx)) throw ValidationError("dx", "must be positive");
    if (!(dy > 0.0) || !std::isfinite(dy)) throw ValidationError("dy", "must be positive");
    if (a < 1) throw ValidationError("a", "must be a positive integer");
    if (!std::isfinite(xo) || !std::isfinite(yo) || !std::isfinite(alpha)) {
      throw ValidationError("xo", "shape pose must be finite");
    }
  }

  Eigen::Vector2d center(double t) const {
    if (!motion || t <= motion->t_start) return {xo, yo};
    const double dt = t - motion->t_start;
    return {xo + motion->vx * dt, yo + motion->vy * dt};
  }

  /// Velocity of the schedule at time t; zero up to and including t_start.
  Eigen::Vector2d velocity(double t) const {
    if (!motion || t <= motion->t_start) return Eigen::Vector2d::Zero();
    return {motion->vx, motion->vy};
  }

  /// Shape at its time-t position extrapolated with its time-t velocity.
  BasicShape predicted_from(double t) const {
    BasicShape s = frozen_at(t);
    const Eigen::Vector2d v = velocity(t);
    if (v.squaredNorm() > 0.0) s.motion = ShapeMotion{t, v(0), v(1)};
    return s;
  }

  /// Same shape held at its position at time t.
  BasicShape frozen_at(double t) const {
    BasicShape s = *this;
    const Eigen::Vector2d c = center(t);
    s.xo = c(0);
    s.yo = c(1);
    s.motion.reset();
    return s;
  }
};

namespace detail {
template <typename T>
T int_pow(T base, int e) {
  T r = base;
  for (int i = 1; i < e; ++i) r = r * base;
  return r;
}
}  // namespace detail

template <typename T>
T shape_value(const BasicShape& s, const T& x, const T& y, double t = 0.0) {
  using std::pow;
  const Eigen::Vector2d c = s.center(t);
  const double ca = std::cos(s.alpha);
  const double sa = std::sin(s.alpha);
  const T ex = x - c(0);
  const T ey = y - c(1);
  const T X = 2.0 * (ca * ex + sa * ey) / s.dx;
  const T Y = 2.0 * (-sa * ex + ca * ey) / s.dy;
  const T sum = detail::int_pow<T>(X * X, s.a) + detail::int_pow<T>(Y * Y, s.a);
  if (s.a == 1) return sum;
  if (sum == 0.0) return T(0.0) * sum;
  return pow(sum, 1.0 / s.a);
}

class ObstacleField {
 public:
  ObstacleField() = default;
  ObstacleField(std::vector<BasicShape> shapes, int p) : shapes_(std::move(shapes)), p_(p) {
    if (p_ < 1) throw ValidationError("p", "union exponent must be >= 1");
    for (const auto& s : shapes_) s.validate();
  }

  const std::vector<BasicShape>& shapes() const { return shapes_; }
  int p() const { return p_; }
  bool empty() const { return shapes_.empty(); }

  ObstacleField with_shape(const BasicShape& s) const {
    auto shapes = shapes_;
    shapes.push_back(s);
    return {std::move(shapes), p_};
  }

  /// Every moving shape held at its position at time t.
  ObstacleField frozen_at(double t) const {
    std::vector<BasicShape> shapes;
    shapes.reserve(shapes_.size());
    for (const auto& s : shapes_) shapes.push_back(s.frozen_at(t));
    return {std::move(shapes), p_};
  }

  /// Every moving shape extrapolated at constant velocity from time t.
  ObstacleField predicted_from(double t) const {
    std::vector<BasicShape> shapes;
    shapes.reserve(shapes_.size());
    for (const auto& s : shapes_) shapes.push_back(s.predicted_from(t));
    return {std::move(shapes), p_};
  }

  /// Smooth union (sum f_i^-p)^(-1/p); zero inside any shape center and
  /// +inf for an empty field.
  template <typename T>
  T union_value(const T& x, const T& y, double t = 0.0) const {
    using std::pow;
    if (shapes_.empty()) return T(std::numeric_limits<double>::infinity());
    std::vector<T> f;
    f.reserve(shapes_.size());
    double fmin = std::numeric_limits<double>::infinity();
    for (const auto& s : shapes_) {
      f.push_back(shape_value<T>(s, x, y, t));
      fmin = std::min(fmin, value_of(f.back()));
    }
    if (!(fmin > 0.0)) return T(0.0) * x;
    if (f.size() == 1) return f.front();
    // Factor out the smallest value so that f^-p cannot overflow.
    T acc = T(0.0) * x;
    for (const auto& fi : f) acc += pow(fi / fmin, -double(p_));
    return fmin * pow(acc, -1.0 / p_);
  }

  /// 1 - f_union; feasible where <= 0.
  template <typename T>
  T constraint_value(const T& x, const T& y, double t = 0.0) const {
    return 1.0 - union_value<T>(x, y, t);
  }

 private:
  static double value_of(double v) { return v; }
  template <typename T>
  static double value_of(const T& v) {
    return v.value();
  }

  std::vector<BasicShape> shapes_;
  int p_ = 5;
};

inline double shape_value(const BasicShape& s, double x, double y, double t = 0.0) {
  return shape_value<double>(s, x, y, t);
}
inline double union_value(const ObstacleField& f, double x, double y, double t = 0.0) {
  return f.union_value<double>(x, y, t);
}
inline double constraint_value(const ObstacleField& f, double x, double y, double t = 0.0) {
  return f.constraint_value<double>(x, y, t);
}

struct GridBounds {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
};

/// nx x ny cells over a rectangle; i indexes north (x), j east (y).
class OccupancyGrid {
 public:
  OccupancyGrid(GridBounds bounds, int nx, int ny)
      : bounds_(bounds), nx_(nx), ny_(ny), cells_(static_cast<std::size_t>(nx * ny), 0) {
    if (nx < 2 || ny < 2) throw ContractViolation("OccupancyGrid: nx and ny must be >= 2");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) {
      throw ContractViolation("OccupancyGrid: degenerate bounds");
    }
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  const GridBounds& bounds() const { return bounds_; }
  double pitch_x() const { return (bounds_.x_max - bounds_.x_min) / nx_; }
  double pitch_y() const { return (bounds_.y_max - bounds_.y_min) / ny_; }
  bool inside(int i, int j) const { return i >= 0 && i < nx_ && j >= 0 && j < ny_; }
  int index(int i, int j) const { return i * ny_ + j; }

  bool occupied(int i, int j) const { return cells_[static_cast<std::size_t>(index(i, j))] != 0; }
  void set_occupied(int i, int j, bool v) {
    cells_[static_cast<std::size_t>(index(i, j))] = v ? 1 : 0;
  }
  int occupied_count() const {
    return static_cast<int>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
  }

  Eigen::Vector2d center(int i, int j) const {
    return {bounds_.x_min + (i + 0.5) * pitch_x(), bounds_.y_min + (j + 0.5) * pitch_y()};
  }

 private:
  GridBounds bounds_;
  int nx_, ny_;
  std::vector<std::uint8_t> cells_;
};

inline OccupancyGrid occupancy_grid(const ObstacleField& field, const GridBounds& bounds, int nx,
                                    int ny, double t = 0.0, double margin = 0.0) {
  OccupancyGrid grid(bounds, nx, ny);
  if (field.empty()) return grid;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      const Eigen::Vector2d c = grid.center(i, j);
      grid.set_occupied(i, j, field.union_value<double>(c(0), c(1), t) <= 1.0 + margin);
    }
  }
  return grid;
}

}  // namespace flatvessel

#endif  // FLATVESSEL_OBSTACLE_FIELD_HPP
