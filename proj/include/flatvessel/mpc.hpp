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

#ifndef FLATVESSEL_MPC_HPP
#define FLATVESSEL_MPC_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/flat_discretization.hpp"
#include "flatvessel/initial_guess.hpp"
#include "flatvessel/knot_program.hpp"
#include "flatvessel/nlp/sqp.hpp"
#include "flatvessel/obstacle_field.hpp"
#include "flatvessel/ocp.hpp"
#include "flatvessel/vessel_dynamics.hpp"

namespace flatvessel {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

enum class TrackingCost {
  kLastWaypointMatch,  // energy over the horizon plus a terminal state penalty
  kAllWaypointMatch,   // state deviation at every knot
};

struct SampleTier {
  double step = 0.5;  // s
  int count = 1;
};

/// How moving obstacles are modeled inside one prediction.
enum class ObstaclePrediction {
  kFrozen,            // held at the position measured at the iteration start
  kConstantVelocity,  // extrapolated with the velocity measured at the iteration start
};

struct MpcConfig {
  std::vector<SampleTier> tiers{{0.5, 2}, {0.75, 4}, {1.78, 9}};
  Eigen::Vector3d q1_diag{1.0 / 25.0, 0.0, 25.0};
  Matrix6d q4 = (Vector6d() << 50, 50, 50, 10, 10, 10).finished().asDiagonal();
  double q2 = 1e3;
  double q3 = 1e2;
  InputBounds bounds;
  TrackingCost cost = TrackingCost::kLastWaypointMatch;
  ObstaclePrediction prediction = ObstaclePrediction::kConstantVelocity;
  Matrix6d awm_q = (Vector6d() << 100, 100, 100, 0, 0, 0).finished().asDiagonal();
  PlanningGridSpec planning;
  Eigen::Vector3d mollifier_eps{0.5, 0.5, 1.6};
  double speed_delta = 1e-3;
  nlp::SolverSettings solver = [] {
    nlp::SolverSettings s;
    s.max_iterations = 60;
    return s;
  }();

  double horizon() const {
    double h = 0.0;
    for (const auto& t : tiers) h += t.step * t.count;
    return h;
  }
  double control_interval() const { return tiers.front().step; }

  SampleGrid grid(double t_now) const {
    std::vector<std::pair<double, int>> v;
    for (const auto& t : tiers) v.emplace_back(t.step, t.count);
    return SampleGrid::tiered(t_now, v);
  }

  void validate() const {
    bounds.validate();
    if (tiers.empty()) throw ValidationError("mpc.tiers", "at least one tier required");
    for (std::size_t i = 0; i < tiers.size(); ++i) {
      if (!(tiers[i].step > 0.0) || tiers[i].count < 1) {
        throw ValidationError("mpc.tiers", "steps must be positive and counts at least one");
      }
      if (i > 0 && !(tiers[i].step > tiers[i - 1].step)) {
        throw ValidationError("mpc.tiers", "sample times must be strictly increasing");
      }
    }
    if (!(q2 >= 0.0) || !(q3 >= 0.0)) throw ValidationError("mpc.q2", "slack weights must be >= 0");
    if ((q1_diag.array() < 0.0).any()) throw ValidationError("mpc.q1_diag", "must be nonnegative");
    for (const Matrix6d* m : {&q4, &awm_q}) {
      if (!m->allFinite() || !m->isApprox(m->transpose())) {
        throw ValidationError("mpc.q4", "weight matrices must be finite and symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Matrix6d> es(*m);
      if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + m->cwiseAbs().maxCoeff())) {
        throw ValidationError("mpc.q4", "weight matrices must be positive semidefinite");
      }
    }
  }
};

/// Dense reference x*(t); queries outside [t0, te] hold the end states.
class ReferenceTrajectory {
 public:
  ReferenceTrajectory() = default;
  explicit ReferenceTrajectory(FlatTrajectory traj) : traj_(std::move(traj)) {}

  double t0() const { return traj_.t0(); }
  double t_end() const { return traj_.t_end(); }
  const FlatTrajectory& trajectory() const { return traj_; }

  FlatPoint flat(double t) const {
    if (t >= traj_.t_end()) {
      FlatPoint p = traj_.evaluate(traj_.t_end());
      p.zdd.setZero();
      return p;
    }
    return traj_.evaluate(std::max(t, traj_.t0()));
  }
  VesselState state(double t) const { return theta_x(flat(t)); }

 private:
  FlatTrajectory traj_;
};

/// Planned state minus reference, with the heading difference taken as is
/// (headings are continuous on both sides).
inline Vector6d state_deviation(const FlatPoint& fp, const ReferenceTrajectory& ref, double t) {
  return theta_x(fp).vector() - ref.state(t).vector();
}

/// Direct evaluation of the last-waypoint-match objective.
inline double mpc_cost(const Eigen::VectorXd& xi, const SampleGrid& grid,
                       const Eigen::Vector3d& q1_diag, const Matrix6d& q4, double q2, double q3,
                       const ReferenceTrajectory& ref, const VesselParams& params = {}) {
  const DecisionLayout layout(grid.segments(), true);
  if (xi.size() != layout.size()) throw ContractViolation("mpc_cost: slack variable missing");
  const double s = xi(layout.slack());
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  const Vector6d dx = state_deviation(traj.sample(grid.segments()), ref, grid.t_end());
  return cost_energy(xi.head(layout.size() - 1), grid, q1_diag, params) + q2 * s * s + q3 * s +
         dx.dot(q4 * dx);
}

/// Trapezoidal quadrature of the state deviation over all knots.
inline double cost_all_waypoint_match(const Eigen::VectorXd& xi, const SampleGrid& grid,
                                      const Matrix6d& Q, const ReferenceTrajectory& ref) {
  const auto traj = FlatTrajectory::from_decision(xi, grid);
  double J = 0.0;
  for (int k = 0; k < grid.knots(); ++k) {
    const Vector6d dx = state_deviation(traj.sample(k), ref, grid.time(k));
    J += grid.trapezoid_weight(k) * dx.dot(Q * dx);
  }
  return J;
}

/// Inequality residuals of the slack-relaxed program: input magnitude and
/// rate rows as in the planner, obstacle rows 1 - f - s, then -s.
inline Eigen::VectorXd slack_constraints(const Eigen::VectorXd& xi, const SampleGrid& grid,
                                         const InputBounds& bounds, const ObstacleField& field,
                                         const VesselParams& params = {}) {
  const DecisionLayout layout(grid.segments(), true);
  if (xi.size() != layout.size()) throw ContractViolation("slack_constraints: slack variable missing");
  const double s = xi(layout.slack());
  Eigen::VectorXd base = inequality_constraints(xi.head(layout.size() - 1), grid, bounds,
                                                ObstacleField(), params);
  const int obstacle_rows = field.empty() ? 0 : grid.knots();
  Eigen::VectorXd out(base.size() + obstacle_rows + 1);
  out.head(base.size()) = base;
  if (obstacle_rows > 0) {
    const auto traj = FlatTrajectory::from_decision(xi, grid);
    for (int k = 0; k < grid.knots(); ++k) {
      const Eigen::Vector3d& z = traj.sample(k).z;
      out(base.size() + k) = field.constraint_value<double>(z(0), z(1), grid.time(k)) - s;
    }
  }
  out(out.size() - 1) = -s;
  return out;
}

struct MpcIterate {
  double t = 0.0;
  VesselState measured;
  ControlInput last_applied;
  SampleGrid grid;
  Eigen::VectorXd xi;  // full layout including the slack
  FlatTrajectory plan;
  double slack = 0.0;
  nlp::SolverReport report;
  bool fallback = false;       // solve rejected, last input held
  double solve_time = 0.0;     // s, guess plus solve
  double terminal_deviation = 0.0;
  ObstacleField field;         // obstacles as modeled for this solve
};

namespace detail {

/// Rows r_i = sqrt(lambda_i) v_i^T (x_k - x*) so that sum r_i^2 = dx^T Q dx.
inline void add_state_weight_rows(KnotProgram& prog, int knot, const Matrix6d& Q,
                                  const Vector6d& target, double scale) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(Q);
  for (int i = 0; i < 6; ++i) {
    const double lam = es.eigenvalues()(i);
    if (lam <= 0.0) continue;
    const Vector6d v = es.eigenvectors().col(i);
    ProgramRow r;
    for (int c = 0; c < 6; ++c) {
      if (v(c) != 0.0) r.knot_terms.push_back({knot, state_channel(c), v(c)});
    }
    r.constant = -v.dot(target);
    r.weight = scale * lam;
    prog.add_squared_cost(std::move(r));
  }
}

}  // namespace detail

/// Slack-augmented tracking program on the tiered grid starting at t_now,
/// with (z0, zd0) substituted from the measured state.
inline KnotProgram build_tracking_program(double t_now, const VesselState& measured,
                                          const ControlInput& last_applied,
                                          const ReferenceTrajectory& ref,
                                          const ObstacleField& frozen, const VesselParams& params,
                                          const MpcConfig& cfg) {
  const SampleGrid grid = cfg.grid(t_now);
  const int N = grid.segments();
  const DecisionLayout layout(N, true);
  Eigen::VectorXd fixed = Eigen::VectorXd::Constant(layout.size(), std::nan(""));
  const Eigen::Vector3d zd0 = rotation(measured.eta(2)) * measured.nu;
  for (int i = 0; i < 3; ++i) {
    fixed(layout.z0(i)) = measured.eta(i);
    fixed(layout.zd0(i)) = zd0(i);
  }
  KnotProgram prog(grid, layout, {params, frozen, cfg.speed_delta}, fixed);

  const InputBounds& b = cfg.bounds;
  rows::add_magnitude_rows(prog, b, 0, N);
  rows::add_rate_rows(prog, b);
  // Rate between the input applied last and the new initial input.
  const double T1 = cfg.control_interval();
  const Eigen::Vector3d tl = last_applied.vector();
  for (int i = 0; i < 3; ++i) {
    if (b.pinned(i)) continue;
    if (std::isfinite(b.rate_max(i))) {
      prog.add_inequality({{{0, tau_channel(i), 1.0}}, {}, -tl(i) - b.rate_max(i) * T1, 1.0, "initial rate upper"});
    }
    if (std::isfinite(b.rate_min(i))) {
      prog.add_inequality({{{0, tau_channel(i), -1.0}}, {}, tl(i) + b.rate_min(i) * T1, 1.0, "initial rate lower"});
    }
  }
  if (!frozen.empty()) rows::add_obstacle_rows(prog, 0, N, layout.slack());

  if (cfg.cost == TrackingCost::kLastWaypointMatch) {
    rows::add_energy_cost(prog, cfg.q1_diag);
    detail::add_state_weight_rows(prog, N, cfg.q4, ref.state(grid.t_end()).vector(), 1.0);
  } else {
    for (int k = 0; k < grid.knots(); ++k) {
      detail::add_state_weight_rows(prog, k, cfg.awm_q, ref.state(grid.time(k)).vector(),
                                    grid.trapezoid_weight(k));
    }
  }
  if (cfg.q2 > 0.0) prog.add_squared_cost({{}, {{layout.slack(), 1.0}}, 0.0, cfg.q2, "slack"});
  if (cfg.q3 > 0.0) prog.add_linear_cost({{}, {{layout.slack(), 1.0}}, 0.0, cfg.q3, "slack"});
  return prog;
}

/// Moving shapes held where they come closest to a constant-speed straight
/// run from `from` (at t0) to `to` (at t1); static shapes unchanged.
inline ObstacleField encounter_field(const ObstacleField& field, const Eigen::Vector2d& from,
                                     const Eigen::Vector2d& to, double t0, double t1,
                                     int samples = 200) {
  std::vector<BasicShape> shapes;
  shapes.reserve(field.shapes().size());
  for (const auto& s : field.shapes()) {
    if (!s.motion) {
      shapes.push_back(s);
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    double t_best = t0;
    for (int i = 0; i <= samples; ++i) {
      const double lam = static_cast<double>(i) / samples;
      const double t = t0 + lam * (t1 - t0);
      const double d = (s.center(t) - (from + lam * (to - from))).norm();
      if (d < best) {
        best = d;
        t_best = t;
      }
    }
    shapes.push_back(s.frozen_at(t_best));
  }
  return {std::move(shapes), field.p()};
}

/// One receding-horizon iteration. The returned iterate carries the plan
/// whose control over [t_now, t_now + T1] is to be applied.
inline MpcIterate mpc_step(double t_now, const VesselState& measured,
                           const ControlInput& last_applied, const ReferenceTrajectory& ref,
                           const ObstacleField& field, const VesselParams& params,
                           const MpcConfig& cfg) {
  if (!measured.vector().allFinite()) throw ContractViolation("mpc_step: measured state is not finite");
  const auto start = std::chrono::steady_clock::now();
  MpcIterate it;
  it.t = t_now;
  it.measured = measured;
  it.last_applied = last_applied;
  it.field = cfg.prediction == ObstaclePrediction::kFrozen ? field.frozen_at(t_now)
                                                           : field.predicted_from(t_now);
  it.grid = cfg.grid(t_now);
  const int N = it.grid.segments();
  const DecisionLayout layout(N, true);

  const KnotProgram prog =
      build_tracking_program(t_now, measured, last_applied, ref, it.field, params, cfg);

  // Fresh guess toward the reference state at the horizon end.
  const VesselState target = ref.state(it.grid.t_end());
  const ObstacleField encounter = encounter_field(it.field, measured.eta.head<2>(), target.eta.head<2>(),
                                                  t_now, it.grid.t_end());
  const InitialGuess guess = assemble_guess(measured, target, encounter, cfg.planning, it.grid,
                                            cfg.mollifier_eps, t_now);
  Eigen::VectorXd xi0(layout.size());
  xi0.head(layout.size() - 1) = guess.xi;
  double s0 = 0.0;
  if (!it.field.empty()) {
    const auto gt = FlatTrajectory::from_decision(guess.xi, it.grid);
    for (int k = 0; k <= N; ++k) {
      const Eigen::Vector3d& z = gt.sample(k).z;
      s0 = std::max(s0, it.field.constraint_value<double>(z(0), z(1), it.grid.time(k)));
    }
  }
  xi0(layout.slack()) = s0;

  Eigen::VectorXd lower = Eigen::VectorXd::Constant(layout.size(), -std::numeric_limits<double>::infinity());
  lower(layout.slack()) = 0.0;
  const nlp::NlpProblem problem = prog.problem(lower);
  const auto solved = nlp::solve(problem, prog.to_free(xi0), cfg.solver);
  it.report = solved.report;
  it.xi = prog.to_full(solved.x);
  it.slack = std::max(0.0, it.xi(layout.slack()));
  it.fallback = !(solved.report.max_violation <= cfg.solver.feasibility_tolerance) ||
                !it.xi.allFinite();
  it.plan = FlatTrajectory::from_decision(it.xi, it.grid);
  it.terminal_deviation = state_deviation(it.plan.sample(N), ref, it.grid.t_end()).norm();
  it.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return it;
}

/// Plant simulation setup for the closed loop.
struct PlantSetup {
  VesselParams params;  // actual plant parameters
  EnvironmentalDisturbance disturbance;
  OdeTolerances tolerances;
};

struct ClosedLoopSample {
  double t;
  VesselState state;
  ControlInput tau;
};

struct ClosedLoopResult {
  std::vector<MpcIterate> iterates;
  std::vector<ClosedLoopSample> samples;  // plant trace
  int fallback_count = 0;
  double max_penetration = -std::numeric_limits<double>::infinity();  // 1 - f, plant trace
  double mean_step_time = 0.0;
  double max_slack = 0.0;
};

/// Applied input between re-plans: the plan's continuous input with the
/// unactuated sway component removed, or the held input after a fallback.
inline ControlInput applied_input(const MpcIterate& it, double t, const VesselParams& model_params,
                                  const InputBounds& bounds) {
  if (it.fallback) return it.last_applied;
  Eigen::Vector3d tau = it.plan.input(t, model_params).vector();
  for (int i = 0; i < 3; ++i) {
    if (bounds.pinned(i)) tau(i) = bounds.tau_max(i);
  }
  return ControlInput::from_vector(tau);
}

/// Receding-horizon loop over [ref.t0(), ref.t_end()]: plan, apply the first
/// control interval to the plant, measure, repeat.
inline ClosedLoopResult closed_loop(const ReferenceTrajectory& ref, const VesselState& x0,
                                    const ControlInput& tau0, const ObstacleField& field,
                                    const VesselParams& model_params, const PlantSetup& plant,
                                    const MpcConfig& cfg, double log_step = 0.1) {
  cfg.validate();
  model_params.validate();
  plant.params.validate();
  if (!(log_step > 0.0)) throw ContractViolation("closed_loop: log step must be positive");
  ClosedLoopResult out;
  const VesselModel model(plant.params);
  const double T1 = cfg.control_interval();
  const double te = ref.t_end();
  VesselState x = x0;
  ControlInput last = tau0;
  double t = ref.t0();
  double total_time = 0.0;

  auto record = [&](double ts, const VesselState& s, const ControlInput& u) {
    out.samples.push_back({ts, s, u});
    out.max_penetration = std::max(out.max_penetration, field.constraint_value<double>(s.eta(0), s.eta(1), ts));
  };
  record(t, x, last);

  const int steps = static_cast<int>(std::ceil((te - t) / T1 - 1e-9));
  for (int n = 0; n < steps; ++n) {
    MpcIterate it = mpc_step(t, x, last, ref, field, model_params, cfg);
    total_time += it.solve_time;
    if (it.fallback) ++out.fallback_count;
    out.max_slack = std::max(out.max_slack, it.slack);

    const double t1 = std::min(t + T1, te);
    std::vector<double> times;
    for (double s = t + log_step; s < t1 - 1e-9; s += log_step) times.push_back(s);
    times.push_back(t1);
    const InputBounds bounds = cfg.bounds;
    const ControlSignal control = [&it, &model_params, &bounds](double ts) {
      return applied_input(it, ts, model_params, bounds);
    };
    const SimulationResult sim = simulate(x, control, t, t1, model, plant.disturbance,
                                          plant.tolerances, times);
    for (std::size_t i = 0; i < sim.times.size(); ++i) {
      if (sim.times[i] <= t) continue;
      record(sim.times[i], sim.states[i], control(sim.times[i]));
    }
    x = sim.final_state;
    last = control(t1);
    t = t1;
    out.iterates.push_back(std::move(it));
  }
  out.mean_step_time = out.iterates.empty() ? 0.0 : total_time / static_cast<double>(out.iterates.size());
  return out;
}

/// Signed lateral offset of an obstacle from the planned path at the point
/// of closest approach, with the obstacle at its position at each sample
/// time: positive when the obstacle lies to the right of the direction of
/// travel (y-east of a north-going path). NaN for an empty plan.
inline double crossing_offset(const FlatTrajectory& plan, const BasicShape& obstacle,
                              int samples_per_segment = 20) {
  double best = std::numeric_limits<double>::infinity();
  double offset = std::nan("");
  const SampleGrid& g = plan.grid();
  for (int k = 0; k < g.segments(); ++k) {
    for (int s = 0; s <= samples_per_segment; ++s) {
      const double t = g.time(k) + g.step(k) * s / samples_per_segment;
      const FlatPoint fp = plan.evaluate(t);
      const Eigen::Vector2d d = obstacle.center(t) - fp.z.head<2>();
      if (d.norm() >= best) continue;
      Eigen::Vector2d dir = fp.zd.head<2>();
      if (dir.norm() < 1e-9) dir = Eigen::Vector2d(std::cos(fp.z(2)), std::sin(fp.z(2)));
      dir.normalize();
      best = d.norm();
      offset = dir(0) * d(1) - dir(1) * d(0);
    }
  }
  return offset;
}

inline double crossing_offset(const FlatTrajectory& plan, const Eigen::Vector2d& obstacle,
                              int samples_per_segment = 20) {
  BasicShape point;
  point.xo = obstacle(0);
  point.yo = obstacle(1);
  return crossing_offset(plan, point, samples_per_segment);
}

}  // namespace flatvessel

#endif  // FLATVESSEL_MPC_HPP
