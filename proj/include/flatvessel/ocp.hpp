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

#ifndef FLATVESSEL_OCP_HPP
#define FLATVESSEL_OCP_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/flat_discretization.hpp"
#include "flatvessel/initial_guess.hpp"
#include "flatvessel/knot_program.hpp"
#include "flatvessel/nlp/sqp.hpp"
#include "flatvessel/obstacle_field.hpp"
#include "flatvessel/vessel_dynamics.hpp"

namespace flatvessel {

/// Input magnitude and rate limits. Rate limits may be infinite.
struct InputBounds {
  Eigen::Vector3d tau_min{-5.0, 0.0, -0.2};
  Eigen::Vector3d tau_max{5.0, 0.0, 0.2};
  Eigen::Vector3d rate_min{-0.5, -std::numeric_limits<double>::infinity(), -0.1};
  Eigen::Vector3d rate_max{0.5, std::numeric_limits<double>::infinity(), 0.1};

  bool pinned(int i) const { return tau_min(i) == tau_max(i); }

  void validate() const {
    static const char* names[3] = {"tau_u", "tau_v", "tau_r"};
    for (int i = 0; i < 3; ++i) {
      if (std::isnan(tau_min(i)) || std::isnan(tau_max(i))) {
        throw ValidationError(std::string("bounds.") + names[i], "must be numbers");
      }
      if (tau_min(i) > tau_max(i)) {
        throw ValidationError(std::string("bounds.") + names[i], "lower bound exceeds upper bound");
      }
      if (!(rate_min(i) <= 0.0) || !(rate_max(i) >= 0.0)) {
        throw ValidationError(std::string("bounds.") + names[i] + "_rate",
                              "rate limits must bracket zero");
      }
    }
  }
};

enum class CostKind { kEnergy, kShortestDistance };

/// Weight on the squared surge-force rate, active on [t_on, t_off].
struct RateWeightSchedule {
  double value = 10.0;
  double t_on = 10.0;
  double t_off = 110.0;
  double at(double t) const { return (t >= t_on && t <= t_off) ? value : 0.0; }
};

struct OcpSpec {
  VesselParams params;
  VesselState x0;
  VesselState xe;
  std::optional<ControlInput> tau0 = ControlInput{};
  SampleGrid grid = SampleGrid::uniform(0.0, 2.0, 60);
  InputBounds bounds;
  ObstacleField field;
  Eigen::Vector3d q1_diag{1.0 / 25.0, 0.0, 25.0};
  CostKind cost_kind = CostKind::kEnergy;
  RateWeightSchedule c1;
  double speed_delta = 1e-3;  // smoothing of the planar speed at rest
  PlanningGridSpec planning;
  Eigen::Vector3d mollifier_eps{0.5, 0.5, 1.6};
  nlp::SolverSettings solver;

  double t0() const { return grid.t0(); }
  double te() const { return grid.t_end(); }
  bool underactuated() const { return bounds.tau_min(1) == 0.0 && bounds.tau_max(1) == 0.0; }

  void validate() const {
    params.validate();
    bounds.validate();
    if (!(te() > t0())) throw ValidationError("te", "must exceed t0");
    if ((q1_diag.array() < 0.0).any() || !q1_diag.allFinite()) {
      throw ValidationError("q1_diag", "entries must be finite and nonnegative");
    }
    if (!(speed_delta >= 0.0)) throw ValidationError("speed_delta", "must be nonnegative");
    if ((mollifier_eps.array() <= 0.0).any()) {
      throw ValidationError("mollifier_eps", "entries must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Direct evaluation of cost and constraint functionals on a decision vector.

inline double cost_energy(const Eigen::VectorXd& xi, const SampleGrid& grid,
                          const Eigen::Vector3d& q1_diag, const VesselParams& params = {}) {
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  double J = 0.0;
  for (int k = 0; k < grid.knots(); ++k) {
    const Eigen::Vector3d tau = theta_tau(traj.sample(k), params).vector();
    J += grid.trapezoid_weight(k) * tau.dot(q1_diag.cwiseProduct(tau));
  }
  return J;
}

/// Path-length measure plus the scheduled penalty on the surge-force rate.
/// `speed_delta` = 0 gives the plain Euclidean speed.
inline double cost_shortest_distance(const Eigen::VectorXd& xi, const SampleGrid& grid,
                                     const RateWeightSchedule& c1, const VesselParams& params = {},
                                     double speed_delta = 0.0) {
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  double J = 0.0;
  for (int k = 0; k < grid.knots(); ++k) {
    const Eigen::Vector3d& zd = traj.sample(k).zd;
    const double v =
        std::sqrt(zd(0) * zd(0) + zd(1) * zd(1) + speed_delta * speed_delta) - speed_delta;
    J += grid.trapezoid_weight(k) * v;
  }
  for (int k = 0; k < grid.segments(); ++k) {
    const double T = grid.step(k);
    const double w = 0.5 * (c1.at(grid.time(k)) + c1.at(grid.time(k + 1)));
    if (w == 0.0) continue;
    const double du = (theta_tau(traj.sample(k + 1), params).tau_u -
                       theta_tau(traj.sample(k), params).tau_u) / T;
    J += T * w * du * du;
  }
  return J;
}

/// theta_x at the first knot minus x0, then at the last knot minus xe.
inline Eigen::VectorXd equality_constraints(const Eigen::VectorXd& xi, const SampleGrid& grid,
                                            const VesselState& x0, const VesselState& xe) {
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  Eigen::VectorXd r(12);
  r.head<6>() = theta_x(traj.sample(0)).vector() - x0.vector();
  r.tail<6>() = theta_x(traj.sample(grid.segments())).vector() - xe.vector();
  return r;
}

/// Knot-wise magnitude rows, rate rows per segment and obstacle rows, in
/// that order. Infinite limits produce no row.
inline Eigen::VectorXd inequality_constraints(const Eigen::VectorXd& xi, const SampleGrid& grid,
                                              const InputBounds& bounds,
                                              const ObstacleField& field,
                                              const VesselParams& params = {}) {
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  std::vector<Eigen::Vector3d> tau(static_cast<std::size_t>(grid.knots()));
  for (int k = 0; k < grid.knots(); ++k) {
    tau[static_cast<std::size_t>(k)] = theta_tau(traj.sample(k), params).vector();
  }
  std::vector<double> r;
  for (int k = 0; k < grid.knots(); ++k) {
    for (int i = 0; i < 3; ++i) {
      if (std::isfinite(bounds.tau_max(i))) r.push_back(tau[static_cast<std::size_t>(k)](i) - bounds.tau_max(i));
      if (std::isfinite(bounds.tau_min(i))) r.push_back(bounds.tau_min(i) - tau[static_cast<std::size_t>(k)](i));
    }
  }
  for (int k = 0; k < grid.segments(); ++k) {
    const double T = grid.step(k);
    const Eigen::Vector3d d = tau[static_cast<std::size_t>(k) + 1] - tau[static_cast<std::size_t>(k)];
    for (int i = 0; i < 3; ++i) {
      if (std::isfinite(bounds.rate_max(i))) r.push_back(d(i) - bounds.rate_max(i) * T);
      if (std::isfinite(bounds.rate_min(i))) r.push_back(bounds.rate_min(i) * T - d(i));
    }
  }
  if (!field.empty()) {
    for (int k = 0; k < grid.knots(); ++k) {
      const Eigen::Vector3d& z = traj.sample(k).z;
      r.push_back(field.constraint_value<double>(z(0), z(1), grid.time(k)));
    }
  }
  return Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
}

// ---------------------------------------------------------------------------
// Row builders shared by the planner and the tracking controller.

namespace rows {

inline ProgramRow state_match(int knot, int component, double target, std::string label) {
  ProgramRow r;
  r.knot_terms.push_back({knot, state_channel(component), 1.0});
  r.constant = -target;
  r.label = std::move(label);
  return r;
}

/// Magnitude limits at knots [first, last]. Pinned inputs become equalities.
inline void add_magnitude_rows(KnotProgram& prog, const InputBounds& b, int first, int last) {
  static const char* names[3] = {"tau_u", "tau_v", "tau_r"};
  for (int k = first; k <= last; ++k) {
    for (int i = 0; i < 3; ++i) {
      const std::string n = names[i];
      if (b.pinned(i)) {
        prog.add_equality({{{k, tau_channel(i), 1.0}}, {}, -b.tau_max(i), 1.0, n + " pinned"});
        continue;
      }
      if (std::isfinite(b.tau_max(i))) {
        prog.add_inequality({{{k, tau_channel(i), 1.0}}, {}, -b.tau_max(i), 1.0, n + " upper"});
      }
      if (std::isfinite(b.tau_min(i))) {
        prog.add_inequality({{{k, tau_channel(i), -1.0}}, {}, b.tau_min(i), 1.0, n + " lower"});
      }
    }
  }
}

/// Difference-quotient rate limits between consecutive knots.
inline void add_rate_rows(KnotProgram& prog, const InputBounds& b) {
  static const char* names[3] = {"tau_u", "tau_v", "tau_r"};
  const SampleGrid& g = prog.grid();
  for (int k = 0; k < g.segments(); ++k) {
    const double T = g.step(k);
    for (int i = 0; i < 3; ++i) {
      if (b.pinned(i)) continue;
      const std::string n = names[i];
      if (std::isfinite(b.rate_max(i))) {
        prog.add_inequality({{{k + 1, tau_channel(i), 1.0}, {k, tau_channel(i), -1.0}},
                             {}, -b.rate_max(i) * T, 1.0, n + " rate upper"});
      }
      if (std::isfinite(b.rate_min(i))) {
        prog.add_inequality({{{k + 1, tau_channel(i), -1.0}, {k, tau_channel(i), 1.0}},
                             {}, b.rate_min(i) * T, 1.0, n + " rate lower"});
      }
    }
  }
}

/// 1 - f_union(knot) [- slack] <= 0 at every knot in [first, last].
inline void add_obstacle_rows(KnotProgram& prog, int first, int last, int slack_index = -1) {
  for (int k = first; k <= last; ++k) {
    ProgramRow r{{{k, Channel::kObstacle, -1.0}}, {}, 1.0, 1.0, "obstacle"};
    if (slack_index >= 0) r.direct_terms.push_back({slack_index, -1.0});
    prog.add_inequality(std::move(r));
  }
}

inline void add_energy_cost(KnotProgram& prog, const Eigen::Vector3d& q1_diag) {
  const SampleGrid& g = prog.grid();
  for (int k = 0; k < g.knots(); ++k) {
    for (int i = 0; i < 3; ++i) {
      if (q1_diag(i) == 0.0) continue;
      prog.add_squared_cost({{{k, tau_channel(i), 1.0}}, {}, 0.0, g.trapezoid_weight(k) * q1_diag(i), ""});
    }
  }
}

inline void add_distance_cost(KnotProgram& prog, const RateWeightSchedule& c1) {
  const SampleGrid& g = prog.grid();
  for (int k = 0; k < g.knots(); ++k) {
    prog.add_linear_cost({{{k, Channel::kPlanarSpeed, 1.0}}, {}, 0.0, g.trapezoid_weight(k), ""});
  }
  for (int k = 0; k < g.segments(); ++k) {
    const double T = g.step(k);
    const double w = 0.5 * (c1.at(g.time(k)) + c1.at(g.time(k + 1)));
    if (w == 0.0) continue;
    prog.add_squared_cost({{{k + 1, Channel::kTauU, 1.0 / T}, {k, Channel::kTauU, -1.0 / T}},
                           {}, 0.0, T * w, ""});
  }
}

}  // namespace rows

/// Planner transcription: full decision vector, boundary states as
/// equalities, optional initial input, knot-wise input/rate/obstacle rows.
inline KnotProgram build_program(const OcpSpec& spec) {
  KnotProgram::Options opt{spec.params, spec.field, spec.speed_delta};
  KnotProgram prog(spec.grid, DecisionLayout(spec.grid.segments()), opt);
  const int N = spec.grid.segments();
  static const char* names[6] = {"x", "y", "psi", "u", "v", "r"};
  const Vector6d x0 = spec.x0.vector();
  const Vector6d xe = spec.xe.vector();
  for (int c = 0; c < 6; ++c) prog.add_equality(rows::state_match(0, c, x0(c), std::string("initial ") + names[c]));
  for (int c = 0; c < 6; ++c) prog.add_equality(rows::state_match(N, c, xe(c), std::string("final ") + names[c]));
  if (spec.tau0) {
    const Eigen::Vector3d t0 = spec.tau0->vector();
    for (int i = 0; i < 3; ++i) {
      if (spec.bounds.pinned(i)) continue;
      prog.add_equality({{{0, tau_channel(i), 1.0}}, {}, -t0(i), 1.0, "initial input"});
    }
  }
  rows::add_magnitude_rows(prog, spec.bounds, 0, N);
  rows::add_rate_rows(prog, spec.bounds);
  if (!spec.field.empty()) rows::add_obstacle_rows(prog, 0, N);
  if (spec.cost_kind == CostKind::kEnergy) {
    rows::add_energy_cost(prog, spec.q1_diag);
  } else {
    rows::add_distance_cost(prog, spec.c1);
  }
  return prog;
}

struct PlanResult {
  Eigen::VectorXd xi;
  FlatTrajectory trajectory;
  std::vector<ControlInput> inputs;  // at the knots
  nlp::SolverReport report;
  InitialGuess guess;
  bool guess_available = false;
  double max_knot_violation = 0.0;       // independent re-evaluation
  double dense_obstacle_violation = 0.0;  // diagnostic between knots
  double endpoint_position_error = 0.0;   // simulated vs planned, m
  double endpoint_heading_error = 0.0;    // rad

  bool certified(double tol) const { return max_knot_violation <= tol; }
};

/// Largest violation of every knot constraint, computed from the direct
/// functionals rather than the solver's transcription.
inline double knot_violation(const OcpSpec& spec, const Eigen::VectorXd& xi) {
  double v = equality_constraints(xi, spec.grid, spec.x0, spec.xe).cwiseAbs().maxCoeff();
  const Eigen::VectorXd g = inequality_constraints(xi, spec.grid, spec.bounds, spec.field, spec.params);
  if (g.size() > 0) v = std::max(v, g.maxCoeff());
  const auto traj = FlatTrajectory::from_decision(xi, spec.grid);
  for (int k = 0; k < spec.grid.knots(); ++k) {
    const Eigen::Vector3d tau = theta_tau(traj.sample(k), spec.params).vector();
    for (int i = 0; i < 3; ++i) {
      if (spec.bounds.pinned(i)) v = std::max(v, std::abs(tau(i) - spec.bounds.tau_max(i)));
    }
  }
  if (spec.tau0) {
    const Eigen::Vector3d tau = theta_tau(traj.sample(0), spec.params).vector();
    v = std::max(v, (tau - spec.tau0->vector()).cwiseAbs().maxCoeff());
  }
  return v;
}

/// Largest 1 - f_union along a dense sweep of the continuous trajectory.
inline double dense_obstacle_sweep(const FlatTrajectory& traj, const ObstacleField& field,
                                   int samples_per_segment = 20) {
  if (field.empty()) return -std::numeric_limits<double>::infinity();
  double worst = -std::numeric_limits<double>::infinity();
  const SampleGrid& g = traj.grid();
  for (int k = 0; k < g.segments(); ++k) {
    for (int s = 0; s <= samples_per_segment; ++s) {
      const double t = g.time(k) + g.step(k) * s / samples_per_segment;
      const FlatPoint fp = traj.evaluate(t);
      worst = std::max(worst, field.constraint_value<double>(fp.z(0), fp.z(1), t));
    }
  }
  return worst;
}

/// Guess, solve, unpack and verify by simulation of the nominal plant under
/// the continuous planned input.
inline PlanResult plan(const OcpSpec& spec, std::optional<Eigen::VectorXd> start = std::nullopt) {
  spec.validate();
  PlanResult out;
  Eigen::VectorXd xi0;
  if (start) {
    if (start->size() != DecisionLayout(spec.grid.segments()).size()) {
      throw ContractViolation("plan: initial decision vector has the wrong length");
    }
    xi0 = *start;
  } else {
    out.guess = assemble_guess(spec.x0, spec.xe, spec.field, spec.planning, spec.grid,
                               spec.mollifier_eps, spec.t0());
    out.guess_available = true;
    xi0 = out.guess.xi;
  }

  const KnotProgram prog = build_program(spec);
  const nlp::NlpProblem problem = prog.problem();
  auto solved = nlp::solve(problem, xi0, spec.solver);
  out.xi = solved.x;
  out.report = solved.report;
  out.trajectory = FlatTrajectory::from_decision(out.xi, spec.grid);
  out.inputs.reserve(static_cast<std::size_t>(spec.grid.knots()));
  for (int k = 0; k < spec.grid.knots(); ++k) {
    out.inputs.push_back(theta_tau(out.trajectory.sample(k), spec.params));
  }
  out.max_knot_violation = knot_violation(spec, out.xi);
  out.dense_obstacle_violation = dense_obstacle_sweep(out.trajectory, spec.field);

  const VesselModel model(spec.params);
  const FlatTrajectory& traj = out.trajectory;
  const VesselParams params = spec.params;
  const ControlSignal control = [&traj, params](double t) {
    return traj.input(std::clamp(t, traj.t0(), traj.t_end()), params);
  };
  const VesselState x_start = theta_x(traj.sample(0));
  const SimulationResult sim = simulate(x_start, control, spec.t0(), spec.te(), model, {}, {}, {},
                                        spec.grid.times());
  const Eigen::Vector3d planned = traj.sample(spec.grid.segments()).z;
  out.endpoint_position_error = (sim.final_state.eta.head<2>() - planned.head<2>()).norm();
  out.endpoint_heading_error = std::abs(sim.final_state.eta(2) - planned(2));
  return out;
}

}  // namespace flatvessel

#endif  // FLATVESSEL_OCP_HPP
