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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Independent oracles (Boost.Odeint, Dijkstra, closed forms) live
// here rather than in the library.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "flatvessel/scenario.hpp"

namespace fv = flatvessel;
namespace ode = boost::numeric::odeint;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* kFixture = FLATVESSEL_SOURCE_DIR "/scenarios/ipan-2021.json";

// ---------------------------------------------------------------------------
// 1. Integrator chain against dopri5 at tight tolerance.

Eigen::Vector2d chain_oracle(const Eigen::Vector2d& zeta0, const std::vector<double>& zdd,
                             const fv::SampleGrid& g) {
  using State = std::array<double, 3>;
  State s{zeta0(0), zeta0(1), zdd[0]};
  for (int k = 0; k < g.segments(); ++k) {
    const double slope = (zdd[static_cast<std::size_t>(k) + 1] - zdd[static_cast<std::size_t>(k)]) / g.step(k);
    auto rhs = [slope](const State& x, State& dx, double) {
      dx[0] = x[1];
      dx[1] = x[2];
      dx[2] = slope;
    };
    ode::integrate_adaptive(ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5<State>()),
                            rhs, s, g.time(k), g.time(k + 1), g.step(k) / 4);
    s[2] = zdd[static_cast<std::size_t>(k) + 1];
  }
  return {s[0], s[1]};
}

Outcome criterion_1() {
  std::mt19937 rng(2026);
  std::uniform_real_distribution<double> step(0.1, 3.0), val(-1.0, 1.0);
  std::uniform_int_distribution<int> nseg(1, 30);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = nseg(rng);
    std::vector<double> steps(static_cast<std::size_t>(n));
    for (double& T : steps) T = step(rng);
    const fv::SampleGrid g(val(rng), steps);
    std::vector<double> zdd(static_cast<std::size_t>(n) + 1);
    for (double& a : zdd) a = val(rng);
    const Eigen::Vector2d zeta0(val(rng), val(rng));
    const auto out = fv::propagate(zeta0, zdd, g);
    const Eigen::Vector2d ref = chain_oracle(zeta0, zdd, g);
    worst = std::max(worst, (out.back() - ref).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, fmt("100 mixed-step grids, max |propagate - dopri5| = %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 2. Flat round trip: closed-form smooth flat outputs through the plant.

struct SmoothFlat {
  Eigen::Vector3d a, b;
  std::array<Eigen::Vector3d, 2> c, w, p;

  fv::FlatPoint at(double t) const {
    fv::FlatPoint fp;
    fp.z = a + b * t;
    fp.zd = b;
    fp.zdd.setZero();
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 3; ++i) {
        const double arg = w[j](i) * t + p[j](i);
        fp.z(i) += c[j](i) * std::sin(arg);
        fp.zd(i) += c[j](i) * w[j](i) * std::cos(arg);
        fp.zdd(i) -= c[j](i) * w[j](i) * w[j](i) * std::sin(arg);
      }
    }
    return fp;
  }
};

SmoothFlat random_flat(std::mt19937& rng) {
  std::uniform_real_distribution<double> pos(-5, 5), vel(-0.3, 0.3), amp(0.1, 1.0), freq(0.05, 0.4),
      ph(0, 2 * std::numbers::pi);
  SmoothFlat f;
  f.a << pos(rng), pos(rng), ph(rng);
  f.b << vel(rng), vel(rng), 0.2 * vel(rng);
  for (int j = 0; j < 2; ++j) {
    f.c[j] << amp(rng), amp(rng), 0.3 * amp(rng);
    f.w[j] << freq(rng), freq(rng), freq(rng);
    f.p[j] << ph(rng), ph(rng), ph(rng);
  }
  return f;
}

Outcome criterion_2() {
  std::mt19937 rng(7);
  const fv::VesselParams params;
  const fv::VesselModel model(params);
  fv::OdeTolerances tol;
  tol.rtol = 1e-8;
  const double te = 40.0;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const SmoothFlat f = random_flat(rng);
    const fv::ControlSignal u = [&f, &params](double t) { return fv::theta_tau(f.at(t), params); };
    const auto sim = fv::simulate(fv::theta_x(f.at(0.0)), u, 0.0, te, model, {}, tol);
    worst = std::max(worst, (sim.final_state.eta.head<2>() - f.at(te).z.head<2>()).norm());
  }
  return {worst <= 1e-4, fmt("50 trajectories over %.0f s, max position error %.2e m", te, worst)};
}

// ---------------------------------------------------------------------------
// 3-5. Planner on the fixture.

struct PlanEvidence {
  fv::PlanRun energy;
  double energy_wall = 0.0;
  fv::PlanRun distance;
};

// Corridor between the two upper shapes that the planned route threads.
bool enters_corridor(const fv::FlatTrajectory& traj) {
  for (double t = traj.t0(); t <= traj.t_end(); t += 0.1) {
    const Eigen::Vector3d z = traj.evaluate(t).z;
    if (z(0) >= 6.0 && z(0) <= 7.0 && z(1) >= 9.5 && z(1) <= 12.0) return true;
  }
  return false;
}

Outcome criterion_3(const fv::Scenario& s, const PlanEvidence& ev) {
  const auto& r = ev.energy.result;
  const auto& m = ev.energy.log.metrics;
  const fv::OcpSpec spec = s.ocp_spec();
  const Eigen::VectorXd eq = fv::equality_constraints(r.xi, spec.grid, spec.x0, spec.xe);
  const double endpoint = eq.tail<6>().cwiseAbs().maxCoeff();
  const bool converged = r.report.status == fv::nlp::SolverStatus::kOptimal;
  const bool e_ok = std::abs(m.energy - 85.3) <= 0.15 * 85.3;
  const bool d_ok = std::abs(m.distance - 36.3) <= 0.05 * 36.3;
  const bool pass = converged && r.guess_available && e_ok && d_ok && r.max_knot_violation <= 1e-6 &&
                    endpoint <= 1e-6 && ev.energy_wall <= 60.0;
  return {pass, fmt("status %s in %d iterations, energy %.2f (85.3 +-15%%), distance %.2f m "
                    "(36.3 +-5%%), knot violation %.1e, endpoint %.1e, %.1f s",
                    fv::nlp::to_string(r.report.status), r.report.iterations, m.energy, m.distance,
                    r.max_knot_violation, endpoint, ev.energy_wall)};
}

Outcome criterion_4(const PlanEvidence& ev) {
  const auto& e = ev.energy.log.metrics;
  const auto& d = ev.distance.log.metrics;
  const bool pass = e.energy < d.energy && d.distance < e.distance;
  return {pass, fmt("energy plan E %.2f / D %.2f, shortest-distance plan E %.2f / D %.2f (%s)", e.energy,
                    e.distance, d.energy, d.distance,
                    fv::nlp::to_string(ev.distance.result.report.status))};
}

Outcome criterion_5(const fv::Scenario& s, const PlanEvidence& ev) {
  fv::OcpSpec spec = s.ocp_spec();
  spec.solver.max_iterations = 1000;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(fv::DecisionLayout(spec.grid.segments()).size());
  const auto t0 = std::chrono::steady_clock::now();
  const fv::PlanResult r = fv::plan(spec, zero);
  const bool optimal = r.report.status == fv::nlp::SolverStatus::kOptimal && r.certified(1e-6);
  const bool threads = enters_corridor(r.trajectory);
  const bool reference_threads = enters_corridor(ev.energy.result.trajectory);
  const bool pass = reference_threads && (!optimal || !threads);
  return {pass, fmt("zero guess: status %s after %d iterations, violation %.2e, corridor %s; "
                    "A* guess plan corridor %s (%.0f s)",
                    fv::nlp::to_string(r.report.status), r.report.iterations, r.max_knot_violation,
                    threads ? "entered" : "not entered", reference_threads ? "entered" : "not entered",
                    seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// 6. Mollifier identities.

Outcome criterion_6() {
  double mass_err = 0.0;
  bool support = true;
  for (double eps : {0.1, 0.5, 1.6}) {
    const int n = 20000;
    const double h = 2 * eps / n;
    double mass = 0.0;
    for (int k = 0; k < n; ++k) {
      const double a = -eps + k * h;
      mass += h / 6 * (fv::mollifier_phi(a, eps) + 4 * fv::mollifier_phi(a + h / 2, eps) +
                       fv::mollifier_phi(a + h, eps));
    }
    mass_err = std::max(mass_err, std::abs(mass - 1.0));
    for (double t : {eps, 1.0001 * eps, 3 * eps, -eps, -2 * eps}) {
      support = support && fv::mollifier_phi(t, eps) == 0.0 && fv::mollifier_phi_dot(t, eps) == 0.0;
    }
  }
  double fd_err = 0.0;
  const double eps = 0.7, h = 1e-6;
  for (double t = -0.69; t < 0.69; t += 0.01) {
    const double fd = (fv::mollifier_phi(t + h, eps) - fv::mollifier_phi(t - h, eps)) / (2 * h);
    fd_err = std::max(fd_err, std::abs(fv::mollifier_phi_dot(t, eps) - fd));
  }
  fv::VelocitySignal sig;
  sig.initial = 0.3;
  sig.steps = {{4.0, 0.2}, {9.0, -0.4}};
  const auto ext = fv::mirror_signal(sig, 0.0, 14.0, 0.3, -0.1);
  auto l1 = [&](double e) {
    double acc = 0.0;
    const int n = 110000;
    for (int k = 0; k < n; ++k) {
      const double t = 1.0 + 11.0 * (k + 0.5) / n;
      acc += std::abs(fv::smoothed_velocity(ext, t, e) - sig.value(t)) * (11.0 / n);
    }
    return acc;
  };
  const double ratio = l1(0.25) / l1(0.5);
  const bool pass = mass_err <= 1e-10 && support && fd_err <= 1e-6 && ratio >= 0.3 && ratio <= 0.7;
  return {pass, fmt("|mass - 1| %.1e, support %s, derivative FD error %.1e, deviation ratio on "
                    "halving eps %.3f",
                    mass_err, support ? "confined" : "leaks", fd_err, ratio)};
}

// ---------------------------------------------------------------------------
// 7. A* against Dijkstra.

double dijkstra(const fv::OccupancyGrid& g, fv::Cell s, fv::Cell t) {
  const int n = g.nx() * g.ny();
  std::vector<double> d(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  using E = std::pair<double, int>;
  std::priority_queue<E, std::vector<E>, std::greater<>> q;
  d[static_cast<std::size_t>(g.index(s.i, s.j))] = 0.0;
  q.emplace(0.0, g.index(s.i, s.j));
  while (!q.empty()) {
    auto [dist, idx] = q.top();
    q.pop();
    if (dist > d[static_cast<std::size_t>(idx)]) continue;
    const int i = idx / g.ny(), j = idx % g.ny();
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        if ((di == 0 && dj == 0) || !g.inside(i + di, j + dj) || g.occupied(i + di, j + dj)) continue;
        const double nd = dist + std::hypot(di * g.pitch_x(), dj * g.pitch_y());
        const int k = g.index(i + di, j + dj);
        if (nd < d[static_cast<std::size_t>(k)]) {
          d[static_cast<std::size_t>(k)] = nd;
          q.emplace(nd, k);
        }
      }
    }
  }
  return d[static_cast<std::size_t>(g.index(t.i, t.j))];
}

Outcome criterion_7() {
  std::mt19937 rng(404);
  std::bernoulli_distribution blocked(0.25);
  std::uniform_int_distribution<int> ci(0, 19), cj(0, 39);
  int solved = 0, unreachable = 0, mismatches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    fv::OccupancyGrid g({-1, 9, -1, 31}, 20, 40);
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 40; ++j) g.set_occupied(i, j, blocked(rng));
    }
    const fv::Cell s{ci(rng), cj(rng)}, t{ci(rng), cj(rng)};
    g.set_occupied(s.i, s.j, false);
    g.set_occupied(t.i, t.j, false);
    const double ref = dijkstra(g, s, t);
    try {
      const fv::CellPath p = fv::astar(g, s, t);
      if (std::isinf(ref)) {
        ++mismatches;
        continue;
      }
      worst = std::max(worst, std::abs(p.cost - ref));
      ++solved;
    } catch (const fv::UnreachableError&) {
      if (std::isinf(ref)) {
        ++unreachable;
      } else {
        ++mismatches;
      }
    }
  }
  // Equal up to the rounding of summing the same edge lengths in a
  // different order.
  const bool pass = mismatches == 0 && worst <= 1e-12;
  return {pass, fmt("100 random 20x40 grids: %d solved, %d unreachable on both, %d disagreements, "
                    "max |A* - Dijkstra| %.1e",
                    solved, unreachable, mismatches, worst)};
}

// ---------------------------------------------------------------------------
// 8. Union and shape properties.

Outcome criterion_8(const fv::Scenario& s) {
  const fv::ObstacleField field = s.static_field();
  std::mt19937 rng(88);
  std::uniform_real_distribution<double> x(-5, 12), y(-2, 32), th(0, 2 * std::numbers::pi);
  int union_fail = 0, monotone_fail = 0;
  for (int n = 0; n < 10000; ++n) {
    const double px = x(rng), py = y(rng);
    double fmin = std::numeric_limits<double>::infinity();
    for (const auto& sh : field.shapes()) fmin = std::min(fmin, fv::shape_value(sh, px, py));
    if (field.union_value<double>(px, py) > fmin * (1.0 + 1e-12)) ++union_fail;
    double prev = 0.0;
    for (int p : {1, 2, 3, 5, 8, 13}) {
      const double v = fv::ObstacleField(field.shapes(), p).union_value<double>(px, py);
      if (v < prev * (1.0 - 1e-12)) ++monotone_fail;
      prev = v;
    }
  }
  double boundary = 0.0;
  for (const auto& sh : field.shapes()) {
    for (int n = 0; n < 500; ++n) {
      const double q = th(rng);
      const double c = std::cos(q), sn = std::sin(q);
      const double u = 0.5 * sh.dx * std::copysign(std::pow(std::abs(c), 1.0 / sh.a), c);
      const double v = 0.5 * sh.dy * std::copysign(std::pow(std::abs(sn), 1.0 / sh.a), sn);
      const double bx = sh.xo + std::cos(sh.alpha) * u - std::sin(sh.alpha) * v;
      const double by = sh.yo + std::sin(sh.alpha) * u + std::cos(sh.alpha) * v;
      boundary = std::max(boundary, std::abs(fv::shape_value(sh, bx, by) - 1.0));
    }
  }
  const bool pass = union_fail == 0 && monotone_fail == 0 && boundary <= 1e-12;
  return {pass, fmt("1e4 points: %d union > min, %d non-monotone in p; max |f - 1| on boundaries %.1e",
                    union_fail, monotone_fail, boundary)};
}

// ---------------------------------------------------------------------------
// 9-11. Closed loop on the disturbed fixture.

struct TrackEvidence {
  fv::TrackRun lwm;
  fv::TrackRun awm;
};

Outcome criterion_9(const fv::Scenario& s, const TrackEvidence& ev) {
  const auto& l = ev.lwm;
  const double T1 = s.mpc.tiers.front().step;
  const auto expected = static_cast<std::size_t>(std::ceil((s.te - s.t0) / T1 - 1e-9));
  const bool complete = l.loop.iterates.size() == expected && !l.log.rows.empty() &&
                        std::abs(l.log.rows.back().t - s.te) < 1e-9;
  const bool pass = complete && l.loop.fallback_count == 0 && l.loop.max_penetration <= 0.5 &&
                    l.log.metrics.energy < ev.awm.log.metrics.energy;
  return {pass, fmt("LWM: %zu/%zu iterates, %d held inputs, max penetration %.3f, energy %.2f; "
                    "all-waypoint: energy %.2f (%d held inputs)",
                    l.loop.iterates.size(), expected, l.loop.fallback_count, l.loop.max_penetration,
                    l.log.metrics.energy, ev.awm.log.metrics.energy, ev.awm.loop.fallback_count)};
}

Outcome criterion_10(const TrackEvidence& ev) {
  std::optional<double> at65, at655;
  for (const auto& r : ev.lwm.log.iterations) {
    if (std::abs(r.t - 65.0) < 1e-9) at65 = r.crossing_offset;
    if (std::abs(r.t - 65.5) < 1e-9) at655 = r.crossing_offset;
  }
  if (!at65 || !at655) return {false, "iterates at 65 s and 65.5 s not found"};
  const bool pass = std::isfinite(*at65) && std::isfinite(*at655) && (*at65 > 0.0) != (*at655 > 0.0);
  return {pass, fmt("signed offset of the obstacle from the planned path: %+.3f m at 65 s (%s), "
                    "%+.3f m at 65.5 s (%s)",
                    *at65, *at65 > 0 ? "ahead" : "behind", *at655, *at655 > 0 ? "ahead" : "behind")};
}

Outcome criterion_11(const TrackEvidence& ev) {
  const double mean = ev.lwm.loop.mean_step_time;
  double worst = 0.0;
  for (const auto& it : ev.lwm.loop.iterates) worst = std::max(worst, it.solve_time);
  return {mean <= 2.0, fmt("mean step %.3f s, slowest %.3f s over %zu iterates", mean, worst,
                           ev.lwm.loop.iterates.size())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&failures](int id, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
  };

  const fv::Scenario s = fv::load_scenario(kFixture);

  report(1, criterion_1);
  report(2, criterion_2);

  PlanEvidence plans;
  {
    const auto t0 = std::chrono::steady_clock::now();
    plans.energy = fv::run_plan(s);
    plans.energy_wall = seconds_since(t0);
    fv::Scenario sd = s;
    sd.cost = fv::CostKind::kShortestDistance;
    plans.distance = fv::run_plan(sd);
  }
  report(3, [&] { return criterion_3(s, plans); });
  report(4, [&] { return criterion_4(plans); });
  report(5, [&] { return criterion_5(s, plans); });
  report(6, criterion_6);
  report(7, criterion_7);
  report(8, [&] { return criterion_8(s); });

  TrackEvidence track;
  {
    track.lwm = fv::run_track(s, plans.energy.result);
    fv::Scenario awm = s;
    awm.mpc.cost = fv::TrackingCost::kAllWaypointMatch;
    track.awm = fv::run_track(awm, plans.energy.result);
  }
  report(9, [&] { return criterion_9(s, track); });
  report(10, [&] { return criterion_10(track); });
  report(11, [&] { return criterion_11(track); });

  std::printf("%d of 11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
