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

#ifndef FLATVESSEL_SCENARIO_HPP
#define FLATVESSEL_SCENARIO_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "flatvessel/errors.hpp"
#include "flatvessel/initial_guess.hpp"
#include "flatvessel/mpc.hpp"
#include "flatvessel/obstacle_field.hpp"
#include "flatvessel/ocp.hpp"
#include "flatvessel/vessel_dynamics.hpp"

namespace flatvessel {

using Json = nlohmann::json;

/// How the declared dx, dy of a shape map onto the defining function.
/// kFullLength uses them as length and width; kSemiAxis doubles them first.
enum class ShapeExtent { kFullLength, kSemiAxis };

struct Scenario {
  std::string name;
  VesselParams params;
  double plant_scale = 1.0;
  EnvironmentalDisturbance disturbance;
  VesselState x0;
  VesselState xe;
  std::optional<ControlInput> tau0 = ControlInput{};
  double t0 = 0.0;
  double te = 120.0;
  InputBounds bounds;

  int union_p = 5;
  ShapeExtent extent = ShapeExtent::kFullLength;
  std::vector<BasicShape> shapes;          // as declared
  std::vector<BasicShape> dynamic_shapes;  // tracking only

  PlanningGridSpec planning;
  Eigen::Vector3d mollifier_eps{0.5, 0.5, 1.6};

  double ocp_step = 2.0;
  CostKind cost = CostKind::kEnergy;
  Eigen::Vector3d q1_diag{1.0 / 25.0, 0.0, 25.0};
  RateWeightSchedule c1;
  double speed_delta = 1e-3;
  nlp::SolverSettings solver;

  MpcConfig mpc;
  double mpc_log_step = 0.1;

  int ocp_segments() const { return static_cast<int>(std::lround((te - t0) / ocp_step)); }

  BasicShape resolved(BasicShape s) const {
    if (extent == ShapeExtent::kSemiAxis) {
      s.dx *= 2.0;
      s.dy *= 2.0;
    }
    return s;
  }
  ObstacleField static_field() const {
    std::vector<BasicShape> v;
    for (const auto& s : shapes) v.push_back(resolved(s));
    return {std::move(v), union_p};
  }
  ObstacleField tracking_field() const {
    std::vector<BasicShape> v;
    for (const auto& s : shapes) v.push_back(resolved(s));
    for (const auto& s : dynamic_shapes) v.push_back(resolved(s));
    return {std::move(v), union_p};
  }

  OcpSpec ocp_spec() const {
    OcpSpec s;
    s.params = params;
    s.x0 = x0;
    s.xe = xe;
    s.tau0 = tau0;
    s.grid = SampleGrid::uniform(t0, ocp_step, ocp_segments());
    s.bounds = bounds;
    s.field = static_field();
    s.q1_diag = q1_diag;
    s.cost_kind = cost;
    s.c1 = c1;
    s.speed_delta = speed_delta;
    s.planning = planning;
    s.mollifier_eps = mollifier_eps;
    s.solver = solver;
    return s;
  }

  MpcConfig mpc_config() const {
    MpcConfig c = mpc;
    c.bounds = bounds;
    c.q1_diag = q1_diag;
    c.planning = planning;
    c.mollifier_eps = mollifier_eps;
    c.speed_delta = speed_delta;
    return c;
  }

  PlantSetup plant() const { return {params.scaled(plant_scale), disturbance, {}}; }

  void validate() const {
    params.validate();
    bounds.validate();
    if (!(te > t0)) throw ValidationError("te", "must exceed t0");
    if (!(plant_scale > 0.0)) throw ValidationError("plant.parameter_scale", "must be positive");
    if (!(ocp_step > 0.0)) throw ValidationError("ocp.step", "must be positive");
    if (std::abs(ocp_segments() * ocp_step - (te - t0)) > 1e-9 * (te - t0) || ocp_segments() < 1) {
      throw ValidationError("ocp.step", "must divide te - t0 into whole segments");
    }
    if (union_p < 1) throw ValidationError("obstacles.p", "must be >= 1");
    for (const auto& s : shapes) s.validate();
    for (const auto& s : dynamic_shapes) s.validate();
    if (planning.nx < 2 || planning.ny < 2) throw ValidationError("planning.nx", "grid needs >= 2 cells per axis");
    if (!(planning.bounds.x_max > planning.bounds.x_min) || !(planning.bounds.y_max > planning.bounds.y_min)) {
      throw ValidationError("planning.bounds", "degenerate rectangle");
    }
    if ((mollifier_eps.array() <= 0.0).any()) throw ValidationError("mollifier_eps", "entries must be positive");
    if (!(mpc_log_step > 0.0)) throw ValidationError("mpc.log_step", "must be positive");
    ocp_spec().validate();
    mpc_config().validate();
  }
};

// ---------------------------------------------------------------------------
// JSON reading with strict key checking.

namespace detail {

inline void allow_keys(const Json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(path, "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ValidationError(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

inline std::string join(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path, "must be a number");
  return j.get<double>();
}

/// null stands for an infinite limit with the given sign.
inline double limit(const Json& j, const std::string& path, double sign) {
  if (j.is_null()) return sign * std::numeric_limits<double>::infinity();
  return number(j, path);
}

inline void read_number(const Json& j, const std::string& path, const char* key, double& out) {
  if (j.contains(key)) out = number(j.at(key), join(path, key));
}

inline void read_int(const Json& j, const std::string& path, const char* key, int& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(join(path, key), "must be an integer");
  out = v.get<int>();
}

template <int N>
void read_vector(const Json& j, const std::string& path, const char* key,
                 Eigen::Matrix<double, N, 1>& out, double sign_for_null = 0.0) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  const std::string p = join(path, key);
  if (!v.is_array() || static_cast<int>(v.size()) != N) {
    throw ValidationError(p, "must be an array of " + std::to_string(N) + " numbers");
  }
  for (int i = 0; i < N; ++i) {
    const std::string pi = p + "[" + std::to_string(i) + "]";
    out(i) = sign_for_null != 0.0 ? limit(v[static_cast<std::size_t>(i)], pi, sign_for_null)
                                  : number(v[static_cast<std::size_t>(i)], pi);
  }
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Reads `key` in radians or `key_deg` in degrees; exactly one may appear.
inline void read_angle(const Json& j, const std::string& path, const std::string& key, double& out) {
  const std::string kd = key + "_deg";
  const bool has_rad = j.contains(key);
  const bool has_deg = j.contains(kd);
  if (has_rad && has_deg) throw ValidationError(path + "." + key, "give either radians or degrees, not both");
  if (has_rad) out = number(j.at(key), path + "." + key);
  if (has_deg) out = deg2rad(number(j.at(kd), path + "." + kd));
}

inline VesselState read_state(const Json& j, const std::string& path) {
  allow_keys(j, path, {"x", "y", "psi", "psi_deg", "u", "v", "r", "r_deg"});
  VesselState s;
  s.eta.setZero();
  s.nu.setZero();
  read_number(j, path, "x", s.eta(0));
  read_number(j, path, "y", s.eta(1));
  read_angle(j, path, "psi", s.eta(2));
  read_number(j, path, "u", s.nu(0));
  read_number(j, path, "v", s.nu(1));
  read_angle(j, path, "r", s.nu(2));
  return s;
}

inline BasicShape read_shape(const Json& j, const std::string& path) {
  allow_keys(j, path, {"xo", "yo", "dx", "dy", "alpha", "alpha_deg", "a", "move_t0", "vx", "vy"});
  BasicShape s;
  for (const char* k : {"xo", "yo", "dx", "dy"}) {
    if (!j.contains(k)) throw ValidationError(join(path, k), "missing");
  }
  read_number(j, path, "xo", s.xo);
  read_number(j, path, "yo", s.yo);
  read_number(j, path, "dx", s.dx);
  read_number(j, path, "dy", s.dy);
  read_angle(j, path, "alpha", s.alpha);
  read_int(j, path, "a", s.a);
  if (j.contains("move_t0") || j.contains("vx") || j.contains("vy")) {
    ShapeMotion m;
    read_number(j, path, "move_t0", m.t_start);
    read_number(j, path, "vx", m.vx);
    read_number(j, path, "vy", m.vy);
    s.motion = m;
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(join(path, e.field().c_str()), "invalid value");
  }
  return s;
}

inline void read_solver(const Json& j, const std::string& path, nlp::SolverSettings& s) {
  allow_keys(j, path, {"feasibility_tolerance", "optimality_tolerance", "max_iterations", "time_limit"});
  read_number(j, path, "feasibility_tolerance", s.feasibility_tolerance);
  read_number(j, path, "optimality_tolerance", s.optimality_tolerance);
  read_int(j, path, "max_iterations", s.max_iterations);
  if (j.contains("time_limit")) s.time_limit = limit(j.at("time_limit"), join(path, "time_limit"), 1.0);
  if (!(s.feasibility_tolerance > 0.0)) throw ValidationError(join(path, "feasibility_tolerance"), "must be positive");
  if (!(s.optimality_tolerance > 0.0)) throw ValidationError(join(path, "optimality_tolerance"), "must be positive");
  if (s.max_iterations < 1) throw ValidationError(join(path, "max_iterations"), "must be >= 1");
}

inline Json limit_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace detail

inline Scenario scenario_from_json(const Json& j) {
  using namespace detail;
  allow_keys(j, "", {"name", "vessel", "plant", "start", "goal", "tau0", "t0", "te", "bounds",
                     "obstacles", "planning", "mollifier_eps", "ocp", "mpc", "solver"});
  Scenario s;
  if (j.contains("name")) {
    if (!j.at("name").is_string()) throw ValidationError("name", "must be a string");
    s.name = j.at("name").get<std::string>();
  }
  if (j.contains("vessel")) {
    const Json& v = j.at("vessel");
    allow_keys(v, "vessel", {"m11", "m22", "m23", "m32", "m33", "Xu", "Yv", "Yr", "Nv", "Nr", "Xuu", "Yvv", "Nrr"});
    VesselParams& p = s.params;
    const std::pair<const char*, double*> fields[] = {
        {"m11", &p.m11}, {"m22", &p.m22}, {"m23", &p.m23}, {"m32", &p.m32}, {"m33", &p.m33},
        {"Xu", &p.Xu},   {"Yv", &p.Yv},   {"Yr", &p.Yr},   {"Nv", &p.Nv},   {"Nr", &p.Nr},
        {"Xuu", &p.Xuu}, {"Yvv", &p.Yvv}, {"Nrr", &p.Nrr}};
    for (auto [k, ptr] : fields) read_number(v, "vessel", k, *ptr);
  }
  if (j.contains("plant")) {
    const Json& v = j.at("plant");
    allow_keys(v, "plant", {"parameter_scale", "current"});
    read_number(v, "plant", "parameter_scale", s.plant_scale);
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    read_vector<2>(v, "plant", "current", c);
    s.disturbance.current_ned = c;
  }
  if (!j.contains("start")) throw ValidationError("start", "missing");
  if (!j.contains("goal")) throw ValidationError("goal", "missing");
  s.x0 = read_state(j.at("start"), "start");
  s.xe = read_state(j.at("goal"), "goal");
  if (j.contains("tau0")) {
    if (j.at("tau0").is_null()) {
      s.tau0.reset();
    } else {
      Eigen::Vector3d t;
      read_vector<3>(j, "", "tau0", t);
      s.tau0 = ControlInput::from_vector(t);
    }
  }
  read_number(j, "", "t0", s.t0);
  read_number(j, "", "te", s.te);
  if (j.contains("bounds")) {
    const Json& b = j.at("bounds");
    allow_keys(b, "bounds", {"tau_min", "tau_max", "rate_min", "rate_max"});
    read_vector<3>(b, "bounds", "tau_min", s.bounds.tau_min, -1.0);
    read_vector<3>(b, "bounds", "tau_max", s.bounds.tau_max, 1.0);
    read_vector<3>(b, "bounds", "rate_min", s.bounds.rate_min, -1.0);
    read_vector<3>(b, "bounds", "rate_max", s.bounds.rate_max, 1.0);
  }
  if (j.contains("obstacles")) {
    const Json& o = j.at("obstacles");
    allow_keys(o, "obstacles", {"p", "extent", "shapes", "dynamic"});
    read_int(o, "obstacles", "p", s.union_p);
    if (o.contains("extent")) {
      const Json& e = o.at("extent");
      if (e == "full_length") {
        s.extent = ShapeExtent::kFullLength;
      } else if (e == "semi_axis") {
        s.extent = ShapeExtent::kSemiAxis;
      } else {
        throw ValidationError("obstacles.extent", "must be \"full_length\" or \"semi_axis\"");
      }
    }
    for (const char* key : {"shapes", "dynamic"}) {
      if (!o.contains(key)) continue;
      const Json& arr = o.at(key);
      const std::string p = std::string("obstacles.") + key;
      if (!arr.is_array()) throw ValidationError(p, "must be an array");
      auto& dst = std::string(key) == "shapes" ? s.shapes : s.dynamic_shapes;
      for (std::size_t i = 0; i < arr.size(); ++i) dst.push_back(read_shape(arr[i], p + "[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("planning")) {
    const Json& g = j.at("planning");
    allow_keys(g, "planning", {"x_min", "x_max", "y_min", "y_max", "nx", "ny", "margin", "sampling"});
    read_number(g, "planning", "x_min", s.planning.bounds.x_min);
    read_number(g, "planning", "x_max", s.planning.bounds.x_max);
    read_number(g, "planning", "y_min", s.planning.bounds.y_min);
    read_number(g, "planning", "y_max", s.planning.bounds.y_max);
    read_int(g, "planning", "nx", s.planning.nx);
    read_int(g, "planning", "ny", s.planning.ny);
    read_number(g, "planning", "margin", s.planning.margin);
    if (g.contains("sampling")) {
      const Json& m = g.at("sampling");
      if (m == "point") {
        s.planning.sampling = KnotSampling::kPoint;
      } else if (m == "cell_average") {
        s.planning.sampling = KnotSampling::kCellAverage;
      } else {
        throw ValidationError("planning.sampling", "must be \"point\" or \"cell_average\"");
      }
    }
  }
  read_vector<3>(j, "", "mollifier_eps", s.mollifier_eps);
  if (j.contains("ocp")) {
    const Json& o = j.at("ocp");
    allow_keys(o, "ocp", {"step", "cost", "q1_diag", "c1", "speed_delta"});
    read_number(o, "ocp", "step", s.ocp_step);
    if (o.contains("cost")) {
      const Json& c = o.at("cost");
      if (c == "energy") {
        s.cost = CostKind::kEnergy;
      } else if (c == "shortest_distance") {
        s.cost = CostKind::kShortestDistance;
      } else {
        throw ValidationError("ocp.cost", "must be \"energy\" or \"shortest_distance\"");
      }
    }
    read_vector<3>(o, "ocp", "q1_diag", s.q1_diag);
    if (o.contains("c1")) {
      const Json& c = o.at("c1");
      allow_keys(c, "ocp.c1", {"value", "t_on", "t_off"});
      read_number(c, "ocp.c1", "value", s.c1.value);
      read_number(c, "ocp.c1", "t_on", s.c1.t_on);
      read_number(c, "ocp.c1", "t_off", s.c1.t_off);
    }
    read_number(o, "ocp", "speed_delta", s.speed_delta);
  }
  if (j.contains("mpc")) {
    const Json& m = j.at("mpc");
    allow_keys(m, "mpc", {"tiers", "q2", "q3", "q4_diag", "cost", "awm_q_diag", "log_step", "solver"});
    if (m.contains("tiers")) {
      const Json& t = m.at("tiers");
      if (!t.is_array() || t.empty()) throw ValidationError("mpc.tiers", "must be a nonempty array");
      s.mpc.tiers.clear();
      for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string p = "mpc.tiers[" + std::to_string(i) + "]";
        allow_keys(t[i], p, {"step", "count"});
        SampleTier tier;
        read_number(t[i], p, "step", tier.step);
        read_int(t[i], p, "count", tier.count);
        s.mpc.tiers.push_back(tier);
      }
    }
    read_number(m, "mpc", "q2", s.mpc.q2);
    read_number(m, "mpc", "q3", s.mpc.q3);
    Vector6d d = s.mpc.q4.diagonal();
    read_vector<6>(m, "mpc", "q4_diag", d);
    s.mpc.q4 = d.asDiagonal();
    d = s.mpc.awm_q.diagonal();
    read_vector<6>(m, "mpc", "awm_q_diag", d);
    s.mpc.awm_q = d.asDiagonal();
    if (m.contains("cost")) {
      const Json& c = m.at("cost");
      if (c == "last_waypoint_match") {
        s.mpc.cost = TrackingCost::kLastWaypointMatch;
      } else if (c == "all_waypoint_match") {
        s.mpc.cost = TrackingCost::kAllWaypointMatch;
      } else {
        throw ValidationError("mpc.cost", "must be \"last_waypoint_match\" or \"all_waypoint_match\"");
      }
    }
    read_number(m, "mpc", "log_step", s.mpc_log_step);
    if (m.contains("solver")) read_solver(m.at("solver"), "mpc.solver", s.mpc.solver);
  }
  if (j.contains("solver")) read_solver(j.at("solver"), "solver", s.solver);
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.filename().string(), std::string("malformed JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

/// Normalized form: every field present, angles in radians, infinite limits
/// as null.
inline Json scenario_to_json(const Scenario& s) {
  using detail::limit_json;
  auto state = [](const VesselState& x) {
    return Json{{"x", x.eta(0)}, {"y", x.eta(1)}, {"psi", x.eta(2)},
                {"u", x.nu(0)},  {"v", x.nu(1)},  {"r", x.nu(2)}};
  };
  auto vec3 = [](const Eigen::Vector3d& v) { return Json::array({v(0), v(1), v(2)}); };
  auto lim3 = [](const Eigen::Vector3d& v) {
    return Json::array({limit_json(v(0)), limit_json(v(1)), limit_json(v(2))});
  };
  auto vec6 = [](const Vector6d& v) {
    Json a = Json::array();
    for (int i = 0; i < 6; ++i) a.push_back(v(i));
    return a;
  };
  auto shape = [](const BasicShape& b) {
    Json o{{"xo", b.xo}, {"yo", b.yo}, {"dx", b.dx}, {"dy", b.dy}, {"alpha", b.alpha}, {"a", b.a}};
    if (b.motion) {
      o["move_t0"] = b.motion->t_start;
      o["vx"] = b.motion->vx;
      o["vy"] = b.motion->vy;
    }
    return o;
  };
  auto solver = [](const nlp::SolverSettings& v) {
    return Json{{"feasibility_tolerance", v.feasibility_tolerance},
                {"optimality_tolerance", v.optimality_tolerance},
                {"max_iterations", v.max_iterations},
                {"time_limit", limit_json(v.time_limit)}};
  };
  const VesselParams& p = s.params;
  Json j;
  j["name"] = s.name;
  j["vessel"] = {{"m11", p.m11}, {"m22", p.m22}, {"m23", p.m23}, {"m32", p.m32}, {"m33", p.m33},
                 {"Xu", p.Xu},   {"Yv", p.Yv},   {"Yr", p.Yr},   {"Nv", p.Nv},   {"Nr", p.Nr},
                 {"Xuu", p.Xuu}, {"Yvv", p.Yvv}, {"Nrr", p.Nrr}};
  j["plant"] = {{"parameter_scale", s.plant_scale},
                {"current", Json::array({s.disturbance.current_ned(0), s.disturbance.current_ned(1)})}};
  j["start"] = state(s.x0);
  j["goal"] = state(s.xe);
  j["tau0"] = s.tau0 ? vec3(s.tau0->vector()) : Json(nullptr);
  j["t0"] = s.t0;
  j["te"] = s.te;
  j["bounds"] = {{"tau_min", lim3(s.bounds.tau_min)}, {"tau_max", lim3(s.bounds.tau_max)},
                 {"rate_min", lim3(s.bounds.rate_min)}, {"rate_max", lim3(s.bounds.rate_max)}};
  Json shapes = Json::array(), dyn = Json::array();
  for (const auto& b : s.shapes) shapes.push_back(shape(b));
  for (const auto& b : s.dynamic_shapes) dyn.push_back(shape(b));
  j["obstacles"] = {{"p", s.union_p},
                    {"extent", s.extent == ShapeExtent::kSemiAxis ? "semi_axis" : "full_length"},
                    {"shapes", shapes},
                    {"dynamic", dyn}};
  const auto& g = s.planning;
  j["planning"] = {{"x_min", g.bounds.x_min}, {"x_max", g.bounds.x_max}, {"y_min", g.bounds.y_min},
                   {"y_max", g.bounds.y_max}, {"nx", g.nx}, {"ny", g.ny}, {"margin", g.margin},
                   {"sampling", g.sampling == KnotSampling::kPoint ? "point" : "cell_average"}};
  j["mollifier_eps"] = vec3(s.mollifier_eps);
  j["ocp"] = {{"step", s.ocp_step},
              {"cost", s.cost == CostKind::kEnergy ? "energy" : "shortest_distance"},
              {"q1_diag", vec3(s.q1_diag)},
              {"c1", {{"value", s.c1.value}, {"t_on", s.c1.t_on}, {"t_off", s.c1.t_off}}},
              {"speed_delta", s.speed_delta}};
  Json tiers = Json::array();
  for (const auto& t : s.mpc.tiers) tiers.push_back({{"step", t.step}, {"count", t.count}});
  j["mpc"] = {{"tiers", tiers},
              {"q2", s.mpc.q2},
              {"q3", s.mpc.q3},
              {"q4_diag", vec6(s.mpc.q4.diagonal())},
              {"cost", s.mpc.cost == TrackingCost::kLastWaypointMatch ? "last_waypoint_match" : "all_waypoint_match"},
              {"awm_q_diag", vec6(s.mpc.awm_q.diagonal())},
              {"log_step", s.mpc_log_step},
              {"solver", solver(s.mpc.solver)}};
  j["solver"] = solver(s.solver);
  return j;
}

// ---------------------------------------------------------------------------
// Run logs.

struct LogRow {
  double t = 0.0;
  VesselState state;
  ControlInput tau;
};

struct RunMetrics {
  double energy = 0.0;
  double distance = 0.0;
  double max_violation = 0.0;  // input magnitude and obstacle rows, >= 0
  double solver_time = 0.0;    // s
};

struct IterationRow {
  double t = 0.0;
  std::string status;
  int iterations = 0;
  double solve_time = 0.0;
  double slack = 0.0;
  double terminal_deviation = 0.0;
  bool fallback = false;
  double crossing_offset = std::nan("");
};

struct RunLog {
  std::vector<LogRow> rows;
  RunMetrics metrics;
  std::vector<IterationRow> iterations;
  std::string status;
  bool success = false;
};

/// Trapezoidal energy tau^T Q1 tau and distance sqrt(u^2 + v^2) over the rows.
inline std::pair<double, double> cross_evaluate(const std::vector<LogRow>& rows,
                                                const Eigen::Vector3d& q1_diag) {
  double E = 0.0, D = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const LogRow& a = rows[i - 1];
    const LogRow& b = rows[i];
    const double h = b.t - a.t;
    auto energy = [&](const ControlInput& u) {
      const Eigen::Vector3d t = u.vector();
      return t.dot(q1_diag.cwiseProduct(t));
    };
    auto speed = [](const VesselState& s) { return s.nu.head<2>().norm(); };
    E += 0.5 * h * (energy(a.tau) + energy(b.tau));
    D += 0.5 * h * (speed(a.state) + speed(b.state));
  }
  return {E, D};
}

inline double row_violation(const std::vector<LogRow>& rows, const InputBounds& bounds,
                            const ObstacleField& field) {
  double v = 0.0;
  for (const auto& r : rows) {
    const Eigen::Vector3d t = r.tau.vector();
    for (int i = 0; i < 3; ++i) {
      v = std::max({v, t(i) - bounds.tau_max(i), bounds.tau_min(i) - t(i)});
    }
    if (!field.empty()) v = std::max(v, field.constraint_value<double>(r.state.eta(0), r.state.eta(1), r.t));
  }
  return v;
}

inline RunMetrics recompute_metrics(const std::vector<LogRow>& rows, const Scenario& s,
                                    const ObstacleField& field, double solver_time) {
  RunMetrics m;
  std::tie(m.energy, m.distance) = cross_evaluate(rows, s.q1_diag);
  m.max_violation = row_violation(rows, s.bounds, field);
  m.solver_time = solver_time;
  return m;
}

inline constexpr const char* kCsvHeader = "t,x,y,psi,u,v,r,tau_u,tau_v,tau_r";

inline void write_rows_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kCsvHeader << '\n' << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.t;
    for (int i = 0; i < 3; ++i) out << ',' << r.state.eta(i);
    for (int i = 0; i < 3; ++i) out << ',' << r.state.nu(i);
    for (int i = 0; i < 3; ++i) out << ',' << r.tau.vector()(i);
    out << '\n';
  }
}

inline std::vector<LogRow> read_rows_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ValidationError(path.filename().string(), "unexpected CSV header");
  }
  std::vector<LogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[10];
    for (int i = 0; i < 10; ++i) {
      if (!std::getline(ss, cell, ',')) throw ValidationError(path.filename().string(), "short CSV row");
      v[i] = std::stod(cell);
    }
    LogRow r;
    r.t = v[0];
    r.state.eta << v[1], v[2], v[3];
    r.state.nu << v[4], v[5], v[6];
    r.tau = {v[7], v[8], v[9]};
    rows.push_back(r);
  }
  return rows;
}

inline void write_iterations_csv(const std::filesystem::path& path, const std::vector<IterationRow>& its) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,status,iterations,solve_time,slack,terminal_deviation,fallback,crossing_offset\n"
      << std::setprecision(9);
  for (const auto& i : its) {
    out << i.t << ',' << i.status << ',' << i.iterations << ',' << i.solve_time << ',' << i.slack << ','
        << i.terminal_deviation << ',' << (i.fallback ? 1 : 0) << ',' << i.crossing_offset << '\n';
  }
}

inline Json metrics_json(const RunLog& log) {
  return {{"status", log.status},
          {"success", log.success},
          {"energy", log.metrics.energy},
          {"distance", log.metrics.distance},
          {"max_violation", log.metrics.max_violation},
          {"solver_time", log.metrics.solver_time}};
}

// ---------------------------------------------------------------------------
// Runs.

inline std::vector<LogRow> knot_rows(const FlatTrajectory& traj, const VesselParams& params) {
  std::vector<LogRow> rows;
  for (int k = 0; k < traj.grid().knots(); ++k) {
    const FlatPoint& fp = traj.sample(k);
    rows.push_back({traj.grid().time(k), theta_x(fp), theta_tau(fp, params)});
  }
  return rows;
}

struct PlanRun {
  RunLog log;
  PlanResult result;
};

inline PlanRun run_plan(const Scenario& s) {
  PlanRun out;
  const OcpSpec spec = s.ocp_spec();
  out.result = plan(spec);
  out.log.rows = knot_rows(out.result.trajectory, s.params);
  out.log.metrics = recompute_metrics(out.log.rows, s, spec.field, out.result.report.wall_time);
  out.log.status = to_string(out.result.report.status);
  out.log.success = out.result.certified(s.solver.feasibility_tolerance);
  return out;
}

struct GuessRun {
  RunLog log;
  InitialGuess guess;
};

inline GuessRun run_guess(const Scenario& s) {
  GuessRun out;
  const OcpSpec spec = s.ocp_spec();
  out.guess = assemble_guess(spec.x0, spec.xe, spec.field, spec.planning, spec.grid,
                             spec.mollifier_eps, spec.t0());
  const auto traj = FlatTrajectory::from_decision(out.guess.xi, spec.grid);
  out.log.rows = knot_rows(traj, s.params);
  out.log.metrics = recompute_metrics(out.log.rows, s, spec.field, 0.0);
  out.log.status = "guess";
  out.log.success = true;
  return out;
}

struct TrackRun {
  RunLog log;
  PlanResult reference;
  ClosedLoopResult loop;
};

/// Plans the reference with the scenario's OCP settings (energy cost unless
/// configured otherwise), then runs the disturbed closed loop.
inline TrackRun run_track(const Scenario& s, std::optional<PlanResult> reference = std::nullopt) {
  TrackRun out;
  out.reference = reference ? std::move(*reference) : plan(s.ocp_spec());
  const ReferenceTrajectory ref(out.reference.trajectory);
  const ObstacleField field = s.tracking_field();
  out.loop = closed_loop(ref, s.x0, s.tau0.value_or(ControlInput{}), field, s.params, s.plant(),
                         s.mpc_config(), s.mpc_log_step);
  double total = 0.0;
  for (const auto& smp : out.loop.samples) out.log.rows.push_back({smp.t, smp.state, smp.tau});
  const bool has_dynamic = !s.dynamic_shapes.empty();
  for (const auto& it : out.loop.iterates) {
    IterationRow r;
    r.t = it.t;
    r.status = to_string(it.report.status);
    r.iterations = it.report.iterations;
    r.solve_time = it.solve_time;
    r.slack = it.slack;
    r.terminal_deviation = it.terminal_deviation;
    r.fallback = it.fallback;
    if (has_dynamic) {
      // The dynamic shapes are appended after the static ones.
      r.crossing_offset = crossing_offset(it.plan, it.field.shapes()[s.shapes.size()]);
    }
    total += it.solve_time;
    out.log.iterations.push_back(r);
  }
  out.log.metrics = recompute_metrics(out.log.rows, s, field, total);
  out.log.status = out.loop.fallback_count == 0 ? "completed" : "completed-with-fallbacks";
  out.log.success = true;
  return out;
}

// ---------------------------------------------------------------------------
// SVG output.

namespace detail {

/// Boundary polygon of a shape, f = 1.
inline std::vector<Eigen::Vector2d> shape_outline(const BasicShape& s, double t, int n = 96) {
  std::vector<Eigen::Vector2d> pts;
  const Eigen::Vector2d c = s.center(t);
  const double ca = std::cos(s.alpha), sa = std::sin(s.alpha);
  for (int i = 0; i < n; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n;
    const double cu = std::cos(th), su = std::sin(th);
    const double u = 0.5 * s.dx * std::copysign(std::pow(std::abs(cu), 1.0 / s.a), cu);
    const double v = 0.5 * s.dy * std::copysign(std::pow(std::abs(su), 1.0 / s.a), su);
    pts.emplace_back(c(0) + ca * u - sa * v, c(1) + sa * u + ca * v);
  }
  return pts;
}

}  // namespace detail

struct PlotTrace {
  std::string label;
  std::string color;
  std::vector<LogRow> rows;
  bool dashed = false;
};

/// NED map (north up, east right) with shape outlines at time `t_shapes`.
inline void write_path_svg(const std::filesystem::path& path, const ObstacleField& field,
                           const GridBounds& view, const std::vector<PlotTrace>& traces,
                           double t_shapes = 0.0) {
  const double scale = 24.0, pad = 30.0;
  const double W = (view.y_max - view.y_min) * scale + 2 * pad;
  const double H = (view.x_max - view.x_min) * scale + 2 * pad;
  auto px = [&](double x, double y) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(2) << pad + (y - view.y_min) * scale << ','
      << pad + (view.x_max - x) * scale;
    return o.str();
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H + 20 * traces.size()
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& s : field.shapes()) {
    out << "<polygon fill=\"#bbbbbb\" stroke=\"#777777\" points=\"";
    for (const auto& p : detail::shape_outline(s, t_shapes)) out << px(p(0), p(1)) << ' ';
    out << "\"/>\n";
  }
  for (const auto& tr : traces) {
    out << "<polyline fill=\"none\" stroke=\"" << tr.color << "\" stroke-width=\"1.5\""
        << (tr.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (const auto& r : tr.rows) out << px(r.state.eta(0), r.state.eta(1)) << ' ';
    out << "\"/>\n";
  }
  for (std::size_t i = 0; i < traces.size(); ++i) {
    out << "<text x=\"" << pad << "\" y=\"" << H + 14 + 20 * i << "\" font-size=\"12\" fill=\""
        << traces[i].color << "\">" << traces[i].label << "</text>\n";
  }
  out << "<text x=\"4\" y=\"14\" font-size=\"11\">x north (m) up, y east (m) right</text>\n</svg>\n";
}

/// Six stacked panels: u, v, r, tau_u, tau_v, tau_r over time.
inline void write_series_svg(const std::filesystem::path& path, const std::vector<PlotTrace>& traces) {
  static const char* names[6] = {"u (m/s)", "v (m/s)", "r (rad/s)", "tau_u (N)", "tau_v (N)", "tau_r (Nm)"};
  const double w = 560, h = 90, pad = 50, gap = 24;
  double t0 = std::numeric_limits<double>::infinity(), t1 = -t0;
  for (const auto& tr : traces) {
    for (const auto& r : tr.rows) {
      t0 = std::min(t0, r.t);
      t1 = std::max(t1, r.t);
    }
  }
  if (!(t1 > t0)) t1 = t0 + 1.0;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + 2 * pad << "\" height=\""
      << 6 * (h + gap) + pad << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int c = 0; c < 6; ++c) {
    auto value = [c](const LogRow& r) { return c < 3 ? r.state.nu(c) : r.tau.vector()(c - 3); };
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& tr : traces) {
      for (const auto& r : tr.rows) {
        lo = std::min(lo, value(r));
        hi = std::max(hi, value(r));
      }
    }
    if (!(hi > lo)) {
      lo -= 1.0;
      hi += 1.0;
    }
    const double top = pad / 2 + c * (h + gap);
    out << "<rect x=\"" << pad << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"none\" stroke=\"#999999\"/>\n<text x=\"4\" y=\"" << top + 12 << "\" font-size=\"11\">"
        << names[c] << "</text>\n";
    for (const auto& tr : traces) {
      out << "<polyline fill=\"none\" stroke=\"" << tr.color << "\" stroke-width=\"1.2\""
          << (tr.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (const auto& r : tr.rows) {
        out << std::fixed << std::setprecision(2) << pad + (r.t - t0) / (t1 - t0) * w << ','
            << top + h - (value(r) - lo) / (hi - lo) * h << ' ';
      }
      out << "\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace flatvessel

#endif  // FLATVESSEL_SCENARIO_HPP
