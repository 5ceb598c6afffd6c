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

#ifndef FLATVESSEL_INITIAL_GUESS_HPP
#define FLATVESSEL_INITIAL_GUESS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/flat_discretization.hpp"
#include "flatvessel/obstacle_field.hpp"
#include "flatvessel/vessel_dynamics.hpp"

namespace flatvessel {

struct Cell {
  int i = 0;
  int j = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct CellPath {
  std::vector<Cell> cells;
  double cost = 0.0;  // metres along cell centers
};

namespace detail {
inline double cell_distance(const OccupancyGrid& g, const Cell& a, const Cell& b) {
  return std::hypot((a.i - b.i) * g.pitch_x(), (a.j - b.j) * g.pitch_y());
}

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

constexpr std::array<std::pair<int, int>, 8> kNeighbours = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};
}  // namespace detail

/// 8-connected A* with Euclidean step costs and heuristic. Ties on f are
/// broken by smaller h, then by row-major cell index.
inline CellPath astar(const OccupancyGrid& grid, Cell start, Cell goal) {
  if (!grid.inside(start.i, start.j) || !grid.inside(goal.i, goal.j)) {
    throw ContractViolation("astar: start or goal outside the grid");
  }
  if (grid.occupied(start.i, start.j) || grid.occupied(goal.i, goal.j)) {
    throw ContractViolation("astar: start and goal must be free cells");
  }
  const int n = grid.nx() * grid.ny();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(static_cast<std::size_t>(n), inf);
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  std::vector<char> closed(static_cast<std::size_t>(n), 0);

  using Entry = std::tuple<double, double, int>;  // f, h, index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  auto heuristic = [&](int i, int j) { return detail::cell_distance(grid, {i, j}, goal); };

  const int s = grid.index(start.i, start.j);
  const int t = grid.index(goal.i, goal.j);
  g[static_cast<std::size_t>(s)] = 0.0;
  open.emplace(heuristic(start.i, start.j), heuristic(start.i, start.j), s);

  while (!open.empty()) {
    auto [f, h, idx] = open.top();
    open.pop();
    if (closed[static_cast<std::size_t>(idx)]) continue;
    closed[static_cast<std::size_t>(idx)] = 1;
    if (idx == t) break;
    const int ci = idx / grid.ny();
    const int cj = idx % grid.ny();
    for (auto [di, dj] : detail::kNeighbours) {
      const int ni = ci + di;
      const int nj = cj + dj;
      if (!grid.inside(ni, nj) || grid.occupied(ni, nj)) continue;
      const int nidx = grid.index(ni, nj);
      if (closed[static_cast<std::size_t>(nidx)]) continue;
      const double cand = g[static_cast<std::size_t>(idx)] +
                          detail::cell_distance(grid, {ci, cj}, {ni, nj});
      if (cand < g[static_cast<std::size_t>(nidx)]) {
        g[static_cast<std::size_t>(nidx)] = cand;
        parent[static_cast<std::size_t>(nidx)] = idx;
        const double hn = heuristic(ni, nj);
        open.emplace(cand + hn, hn, nidx);
      }
    }
  }
  if (!closed[static_cast<std::size_t>(t)]) {
    throw UnreachableError("astar: goal cell is unreachable from the start cell");
  }
  CellPath path;
  path.cost = g[static_cast<std::size_t>(t)];
  for (int idx = t; idx != -1; idx = parent[static_cast<std::size_t>(idx)]) {
    path.cells.push_back({idx / grid.ny(), idx % grid.ny()});
  }
  std::reverse(path.cells.begin(), path.cells.end());
  return path;
}

/// Free cell whose center is closest to (x, y); ties resolved by index.
inline Cell nearest_free_cell(const OccupancyGrid& grid, double x, double y) {
  Cell best{-1, -1};
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.nx(); ++i) {
    for (int j = 0; j < grid.ny(); ++j) {
      if (grid.occupied(i, j)) continue;
      const Eigen::Vector2d c = grid.center(i, j);
      const double d = std::hypot(c(0) - x, c(1) - y);
      if (d < best_d) {
        best_d = d;
        best = {i, j};
      }
    }
  }
  if (best.i < 0) throw UnreachableError("nearest_free_cell: every cell is occupied");
  return best;
}

/// Waypoints in NED coordinates.
struct GridPath {
  std::vector<Eigen::Vector2d> waypoints;

  double length() const {
    double L = 0.0;
    for (std::size_t k = 1; k < waypoints.size(); ++k) L += (waypoints[k] - waypoints[k - 1]).norm();
    return L;
  }
};

inline bool touches_obstacle(const OccupancyGrid& grid, const Cell& c) {
  for (auto [di, dj] : detail::kNeighbours) {
    const int ni = c.i + di;
    const int nj = c.j + dj;
    if (grid.inside(ni, nj) && grid.occupied(ni, nj)) return true;
  }
  return false;
}

/// Keeps the end cells and every cell next to an occupied cell, maps them to
/// NED and pins the ends to the exact start/goal positions.
inline GridPath refine_path(const CellPath& path, const OccupancyGrid& grid,
                            const Eigen::Vector2d& start, const Eigen::Vector2d& goal) {
  if (path.cells.empty()) throw ContractViolation("refine_path: empty path");
  GridPath out;
  out.waypoints.push_back(start);
  for (std::size_t k = 1; k + 1 < path.cells.size(); ++k) {
    if (touches_obstacle(grid, path.cells[k])) {
      out.waypoints.push_back(grid.center(path.cells[k].i, path.cells[k].j));
    }
  }
  out.waypoints.push_back(goal);
  // Drop coincident neighbours (e.g. start == goal or a kept cell at an end).
  std::vector<Eigen::Vector2d> unique;
  for (const auto& w : out.waypoints) {
    if (unique.empty() || (w - unique.back()).norm() > 1e-12) unique.push_back(w);
  }
  if (unique.size() == 1 && out.waypoints.size() > 1) unique.push_back(out.waypoints.back());
  out.waypoints = std::move(unique);
  return out;
}

/// A jump of `height` in a piecewise-constant velocity signal.
struct SignalStep {
  double time;
  double height;
};

/// A Dirac impulse in a velocity signal (heading rate at a turn).
struct SignalImpulse {
  double time;
  double weight;
};

/// Piecewise-constant velocity signal on [t0, te], described by its initial
/// value and the jumps after t0.
struct VelocitySignal {
  double initial = 0.0;
  std::vector<SignalStep> steps;
  std::vector<SignalImpulse> impulses;

  double value(double t) const {
    double v = initial;
    for (const auto& s : steps) {
      if (t >= s.time) v += s.height;
    }
    return v;
  }
};

struct SpeedSignals {
  double t0 = 0.0, te = 0.0;
  double speed = 0.0;  // along-track
  std::vector<double> waypoint_times;
  std::array<VelocitySignal, 3> signals;  // x dot, y dot, psi dot
};

/// Timing at constant along-track speed, tangent velocities and heading
/// impulses at each turn. The heading leaves psi0 with a boundary impulse at
/// t0 + boundary_inset and is steered to psie by one at te - boundary_inset.
inline SpeedSignals build_speed_signals(const GridPath& path, double t0, double te, double psi0,
                                        double psie, double boundary_inset = 0.0) {
  if (!(te > t0)) throw ContractViolation("build_speed_signals: te must exceed t0");
  const double L = path.length();
  if (path.waypoints.size() < 2 || !(L > 0.0)) {
    throw ContractViolation("build_speed_signals: path has zero length");
  }
  SpeedSignals out;
  out.t0 = t0;
  out.te = te;
  out.speed = L / (te - t0);
  const auto& w = path.waypoints;
  const std::size_t segs = w.size() - 1;

  out.waypoint_times.push_back(t0);
  std::vector<Eigen::Vector2d> vel;
  std::vector<double> bearing;
  for (std::size_t j = 0; j < segs; ++j) {
    const Eigen::Vector2d d = w[j + 1] - w[j];
    const double len = d.norm();
    vel.push_back(out.speed * d / len);
    bearing.push_back(std::atan2(d(1), d(0)));
    out.waypoint_times.push_back(out.waypoint_times.back() + len / out.speed);
  }
  out.waypoint_times.back() = te;

  for (int dim = 0; dim < 2; ++dim) {
    auto& sig = out.signals[static_cast<std::size_t>(dim)];
    sig.initial = vel[0](dim);
    for (std::size_t j = 1; j < segs; ++j) {
      const double h = vel[j](dim) - vel[j - 1](dim);
      if (h != 0.0) sig.steps.push_back({out.waypoint_times[j], h});
    }
  }

  auto& psi = out.signals[2];
  double heading = psi0;
  const double first_turn = detail::wrap_angle(bearing[0] - psi0);
  psi.impulses.push_back({t0 + boundary_inset, first_turn});
  heading += first_turn;
  for (std::size_t j = 1; j < segs; ++j) {
    const double turn = detail::wrap_angle(bearing[j] - bearing[j - 1]);
    if (turn != 0.0) psi.impulses.push_back({out.waypoint_times[j], turn});
    heading += turn;
  }
  psi.impulses.push_back({te - boundary_inset, psie - heading});
  return out;
}

/// Unit-mass smoothing kernel 15/(16 eps) (1 - (t/eps)^2)^2 on [-eps, eps].
inline double mollifier_phi(double t, double eps) {
  if (std::abs(t) >= eps) return 0.0;
  const double q = 1.0 - (t / eps) * (t / eps);
  return 15.0 / (16.0 * eps) * q * q;
}

inline double mollifier_phi_dot(double t, double eps) {
  if (std::abs(t) >= eps) return 0.0;
  const double q = 1.0 - (t / eps) * (t / eps);
  return -15.0 * t * q / (4.0 * eps * eps * eps);
}

/// Point-mirrors a signal about (t0, v0) and (te, ve) and lists every jump and
/// impulse of the extended signal. Mirroring makes the smoothed signal take
/// exactly the boundary values v0 and ve.
inline VelocitySignal mirror_signal(const VelocitySignal& sig, double t0, double te, double v0,
                                    double ve) {
  VelocitySignal ext;
  const double final_value = [&] {
    double v = sig.initial;
    for (const auto& s : sig.steps) v += s.height;
    return v;
  }();
  ext.initial = 2.0 * v0 - sig.initial;
  ext.steps.push_back({t0, 2.0 * (sig.initial - v0)});
  ext.steps.push_back({te, 2.0 * (ve - final_value)});
  for (const auto& s : sig.steps) {
    ext.steps.push_back({s.time, s.height});
    ext.steps.push_back({2.0 * t0 - s.time, s.height});
    ext.steps.push_back({2.0 * te - s.time, s.height});
  }
  // `initial` is the value before every listed jump, i.e. left of the
  // mirrored copies that precede t0.
  for (const auto& s : sig.steps) ext.initial -= s.height;
  for (const auto& im : sig.impulses) {
    ext.impulses.push_back({im.time, im.weight});
    ext.impulses.push_back({2.0 * t0 - im.time, -im.weight});
    ext.impulses.push_back({2.0 * te - im.time, -im.weight});
  }
  return ext;
}

/// Second derivative of the smoothed signal: steps contribute h phi(t - t_j),
/// impulses contribute a phi_dot(t - t_j).
inline double smoothed_acceleration(const VelocitySignal& ext, double t, double eps) {
  double acc = 0.0;
  for (const auto& s : ext.steps) acc += s.height * mollifier_phi(t - s.time, eps);
  for (const auto& im : ext.impulses) acc += im.weight * mollifier_phi_dot(t - im.time, eps);
  return acc;
}

/// Smoothed velocity (signal convolved with phi), used for diagnostics.
inline double smoothed_velocity(const VelocitySignal& ext, double t, double eps) {
  // Integral of phi from -eps to s.
  auto cdf = [eps](double s) {
    if (s <= -eps) return 0.0;
    if (s >= eps) return 1.0;
    const double u = s / eps;
    return 0.5 + 15.0 / 16.0 * (u - 2.0 * u * u * u / 3.0 + u * u * u * u * u / 5.0);
  };
  double v = ext.initial;
  for (const auto& s : ext.steps) v += s.height * cdf(t - s.time);
  for (const auto& im : ext.impulses) v += im.weight * mollifier_phi(t - im.time, eps);
  return v;
}

/// How the smoothed acceleration is turned into knot samples.
enum class KnotSampling {
  /// Point value of the smoothed acceleration at each knot.
  kPoint,
  /// Mean of the smoothed acceleration over the half-steps around each knot.
  /// Kernels narrower than the step cannot fall between knots, so the
  /// sampled accelerations keep the velocity increments of the signal.
  kCellAverage,
};

/// Samples z'' at the knots of `grid` for all three flat dimensions.
inline Eigen::Matrix<double, 3, Eigen::Dynamic> smooth_to_zddot(
    const SpeedSignals& signals, const Eigen::Vector3d& eps, const Eigen::Vector3d& zd0,
    const Eigen::Vector3d& zde, const SampleGrid& grid,
    KnotSampling sampling = KnotSampling::kCellAverage) {
  const int n = grid.segments();
  Eigen::Matrix<double, 3, Eigen::Dynamic> zdd(3, grid.knots());
  for (int i = 0; i < 3; ++i) {
    if (!(eps(i) > 0.0)) throw ContractViolation("smooth_to_zddot: eps must be positive");
    const auto ext = mirror_signal(signals.signals[static_cast<std::size_t>(i)], signals.t0,
                                   signals.te, zd0(i), zde(i));
    for (int k = 0; k < grid.knots(); ++k) {
      const double t = grid.time(k);
      if (sampling == KnotSampling::kPoint) {
        zdd(i, k) = smoothed_acceleration(ext, t, eps(i));
        continue;
      }
      const double left = 0.5 * grid.step(k > 0 ? k - 1 : 0);
      const double right = 0.5 * grid.step(k < n ? k : n - 1);
      zdd(i, k) = (smoothed_velocity(ext, t + right, eps(i)) -
                   smoothed_velocity(ext, t - left, eps(i))) / (left + right);
    }
  }
  return zdd;
}

struct PlanningGridSpec {
  GridBounds bounds{-1.0, 9.0, -1.0, 31.0};
  int nx = 20;
  int ny = 40;
  double margin = 0.0;
  KnotSampling sampling = KnotSampling::kCellAverage;
};

struct InitialGuess {
  Eigen::VectorXd xi;
  FlatParameters params;
  CellPath cells;
  GridPath path;
  SpeedSignals signals;
};

/// Full pipeline: occupancy grid, A*, refinement, timing, smoothing and
/// sampling. Integration constants come from the initial state.
inline InitialGuess assemble_guess(const VesselState& x0, const VesselState& xe,
                                   const OccupancyGrid& occ, const PlanningGridSpec& spec,
                                   const SampleGrid& grid, const Eigen::Vector3d& eps) {
  InitialGuess out;
  const Eigen::Vector2d start = x0.eta.head<2>();
  const Eigen::Vector2d goal = xe.eta.head<2>();
  out.cells = astar(occ, nearest_free_cell(occ, start(0), start(1)),
                    nearest_free_cell(occ, goal(0), goal(1)));
  out.path = refine_path(out.cells, occ, start, goal);

  const double t0 = grid.t0();
  const double te = grid.t_end();
  const Eigen::Vector3d zd0 = rotation(x0.eta(2)) * x0.nu;
  const Eigen::Vector3d zde = rotation(xe.eta(2)) * xe.nu;

  out.params.z0 = x0.eta;
  out.params.zd0 = zd0;
  if (out.path.length() > 1e-9) {
    out.signals = build_speed_signals(out.path, t0, te, x0.eta(2), xe.eta(2), eps(2));
  } else {
    // Station keeping: no translation, only the heading change.
    out.signals.t0 = t0;
    out.signals.te = te;
    out.signals.waypoint_times = {t0, te};
    out.signals.signals[2].impulses = {{t0 + eps(2), 0.5 * (xe.eta(2) - x0.eta(2))},
                                       {te - eps(2), 0.5 * (xe.eta(2) - x0.eta(2))}};
  }
  out.params.zdd = smooth_to_zddot(out.signals, eps, zd0, zde, grid, spec.sampling);
  out.xi = pack(out.params, DecisionLayout(grid.segments()));
  return out;
}

inline InitialGuess assemble_guess(const VesselState& x0, const VesselState& xe,
                                   const ObstacleField& field, const PlanningGridSpec& spec,
                                   const SampleGrid& grid, const Eigen::Vector3d& eps,
                                   double field_time = 0.0) {
  return assemble_guess(x0, xe,
                        occupancy_grid(field, spec.bounds, spec.nx, spec.ny, field_time, spec.margin),
                        spec, grid, eps);
}

}  // namespace flatvessel

#endif  // FLATVESSEL_INITIAL_GUESS_HPP
