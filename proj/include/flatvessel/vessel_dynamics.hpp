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

#ifndef FLATVESSEL_VESSEL_DYNAMICS_HPP
#define FLATVESSEL_VESSEL_DYNAMICS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/ode.hpp"

namespace flatvessel {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Coefficients of the 3DOF surge/sway/yaw model. Inertia entries include
/// added mass; damping entries are the linear and quadratic hydrodynamic
/// derivatives (signs folded in so that every value is nonnegative).
struct VesselParams {
  double m11 = 25.8, m22 = 33.8, m23 = 6.2, m32 = 6.2, m33 = 2.76;
  double Xu = 12.0, Yv = 17.0, Yr = 0.2, Nv = 0.5, Nr = 0.5;
  double Xuu = 2.5, Yvv = 4.5, Nrr = 0.1;

  /// Every coefficient multiplied by `factor` (parameter-mismatch studies).
  VesselParams scaled(double factor) const {
    VesselParams p = *this;
    for (double* v : {&p.m11, &p.m22, &p.m23, &p.m32, &p.m33, &p.Xu, &p.Yv, &p.Yr, &p.Nv,
                      &p.Nr, &p.Xuu, &p.Yvv, &p.Nrr}) {
      *v *= factor;
    }
    return p;
  }

  void validate() const {
    auto finite = [](const char* name, double v) {
      if (!std::isfinite(v)) throw ValidationError(name, "must be finite");
    };
    for (auto [name, v] : {std::pair{"m11", m11}, {"m22", m22}, {"m23", m23}, {"m32", m32},
                           {"m33", m33}}) {
      finite(name, v);
    }
    if (m11 <= 0) throw ValidationError("m11", "must be positive");
    if (m22 <= 0) throw ValidationError("m22", "must be positive");
    if (m22 * m33 - m23 * m32 <= 0) {
      throw ValidationError("m33", "inertia matrix must be invertible (m22*m33 - m23*m32 > 0)");
    }
    // Positive definite symmetric part: sway/yaw block with averaged coupling.
    const double mbar = 0.5 * (m23 + m32);
    if (m22 * m33 - mbar * mbar <= 0) {
      throw ValidationError("m23", "symmetric part of the inertia matrix must be positive definite");
    }
    for (auto [name, v] : {std::pair{"Xu", Xu}, {"Yv", Yv}, {"Yr", Yr}, {"Nv", Nv}, {"Nr", Nr},
                           {"Xuu", Xuu}, {"Yvv", Yvv}, {"Nrr", Nrr}}) {
      finite(name, v);
      if (v < 0) throw ValidationError(name, "damping coefficients must be nonnegative");
    }
  }
};

struct VesselState {
  Eigen::Vector3d eta = Eigen::Vector3d::Zero();  // x (north), y (east), psi
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();   // u (surge), v (sway), r (yaw rate)

  Vector6d vector() const {
    Vector6d s;
    s << eta, nu;
    return s;
  }
  static VesselState from_vector(const Vector6d& s) { return {s.head<3>(), s.tail<3>()}; }
};

struct ControlInput {
  double tau_u = 0.0;  // N
  double tau_v = 0.0;  // N
  double tau_r = 0.0;  // N m

  Eigen::Vector3d vector() const { return {tau_u, tau_v, tau_r}; }
  static ControlInput from_vector(const Eigen::Vector3d& t) { return {t(0), t(1), t(2)}; }
};

/// Ocean current in the NED frame. It shifts the vessel kinematically and
/// leaves the hydrodynamic terms untouched.
struct EnvironmentalDisturbance {
  Eigen::Vector2d current_ned = Eigen::Vector2d::Zero();
};

template <typename T>
Mat3<T> rotation(const T& psi) {
  using std::cos;
  using std::sin;
  const T c = cos(psi);
  const T s = sin(psi);
  Mat3<T> R;
  R << c, -s, T(0), s, c, T(0), T(0), T(0), T(1);
  return R;
}

inline Eigen::Matrix3d inertia_matrix(const VesselParams& p) {
  Eigen::Matrix3d M;
  M << p.m11, 0, 0, 0, p.m22, p.m23, 0, p.m32, p.m33;
  return M;
}

template <typename T>
Mat3<T> coriolis_matrix(const Vec3<T>& nu, const VesselParams& p) {
  const T& u = nu(0);
  const T& v = nu(1);
  const T& r = nu(2);
  const T c13 = -p.m22 * v - 0.5 * (p.m23 + p.m32) * r;
  Mat3<T> C = Mat3<T>::Zero();
  C(0, 2) = c13;
  C(1, 2) = p.m11 * u;
  C(2, 0) = -c13;
  C(2, 1) = -p.m11 * u;
  return C;
}

template <typename T>
Mat3<T> damping_matrix(const Vec3<T>& nu, const VesselParams& p) {
  using std::abs;
  Mat3<T> D = Mat3<T>::Zero();
  D(0, 0) = p.Xu + p.Xuu * abs(nu(0));
  D(1, 1) = p.Yv + p.Yvv * abs(nu(1));
  D(1, 2) = T(p.Yr);
  D(2, 1) = T(p.Nv);
  D(2, 2) = p.Nr + p.Nrr * abs(nu(2));
  return D;
}

/// (C(nu) + D(nu)) nu, the velocity-dependent part of the kinetics.
template <typename T>
Vec3<T> hydrodynamic_force(const Vec3<T>& nu, const VesselParams& p) {
  return (coriolis_matrix(nu, p) + damping_matrix(nu, p)) * nu;
}

/// Validated model: parameters plus the cached inverse inertia.
class VesselModel {
 public:
  VesselModel() : VesselModel(VesselParams{}) {}
  explicit VesselModel(const VesselParams& params) : params_(params) {
    params_.validate();
    inertia_ = inertia_matrix(params_);
    inertia_inv_ = inertia_.inverse();
  }

  const VesselParams& params() const { return params_; }
  const Eigen::Matrix3d& inertia() const { return inertia_; }
  const Eigen::Matrix3d& inertia_inverse() const { return inertia_inv_; }

  Vector6d state_derivative(const Vector6d& state, const Eigen::Vector3d& tau,
                            const EnvironmentalDisturbance& dist = {}) const {
    const Eigen::Vector3d nu = state.tail<3>();
    Vector6d dx;
    dx.head<3>() = rotation(state(2)) * nu;
    dx(0) += dist.current_ned(0);
    dx(1) += dist.current_ned(1);
    dx.tail<3>() = inertia_inv_ * (tau - hydrodynamic_force<double>(nu, params_));
    return dx;
  }

  VesselState state_derivative(const VesselState& s, const ControlInput& tau,
                               const EnvironmentalDisturbance& dist = {}) const {
    return VesselState::from_vector(state_derivative(s.vector(), tau.vector(), dist));
  }

 private:
  VesselParams params_;
  Eigen::Matrix3d inertia_;
  Eigen::Matrix3d inertia_inv_;
};

struct SimulationResult {
  std::vector<double> times;
  std::vector<VesselState> states;
  VesselState final_state;
  int steps = 0;
};

using ControlSignal = std::function<ControlInput(double)>;

/// Integrates the vessel model from `t0` to `t1` with an adaptive
/// Dormand-Prince 5(4) scheme. States are reported at `output_times`
/// (clipped to [t0, t1]); the final state is always filled. Integration is
/// restarted at each entry of `breakpoints` so that kinks in the control
/// signal do not degrade the error control.
inline SimulationResult simulate(const VesselState& x0, const ControlSignal& control, double t0,
                                 double t1, const VesselModel& model,
                                 const EnvironmentalDisturbance& dist = {},
                                 const OdeTolerances& tol = {},
                                 const std::vector<double>& output_times = {},
                                 const std::vector<double>& breakpoints = {}) {
  if (!(t1 > t0)) throw ContractViolation("simulate: t1 must exceed t0");
  auto rhs = [&](double t, const Vector6d& s) {
    return model.state_derivative(s, control(t).vector(), dist);
  };
  auto run = integrate_dense<6>(rhs, x0.vector(), t0, t1, tol, output_times, breakpoints);
  SimulationResult out;
  out.times = std::move(run.times);
  out.states.reserve(run.states.size());
  for (const auto& s : run.states) out.states.push_back(VesselState::from_vector(s));
  out.final_state = VesselState::from_vector(run.final_state);
  out.steps = run.accepted_steps;
  return out;
}

}  // namespace flatvessel

#endif  // FLATVESSEL_VESSEL_DYNAMICS_HPP
