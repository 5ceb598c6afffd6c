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

#ifndef FLATVESSEL_FLAT_PARAMETRIZATION_HPP
#define FLATVESSEL_FLAT_PARAMETRIZATION_HPP

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "flatvessel/vessel_dynamics.hpp"

namespace flatvessel {

// The flat output is the pose z = eta. States need z and its first
// derivative, inputs additionally need the second derivative.

struct FlatPoint {
  Eigen::Vector3d z = Eigen::Vector3d::Zero();
  Eigen::Vector3d zd = Eigen::Vector3d::Zero();
  Eigen::Vector3d zdd = Eigen::Vector3d::Zero();
};

/// d/dpsi of R(psi)^T.
template <typename T>
Mat3<T> rotation_transpose_derivative(const T& psi) {
  using std::cos;
  using std::sin;
  const T c = cos(psi);
  const T s = sin(psi);
  Mat3<T> dRt;
  dRt << -s, c, T(0), -c, -s, T(0), T(0), T(0), T(0);
  return dRt;
}

/// Body velocities from the flat output: nu = R(psi)^T zdot.
template <typename T>
Vec3<T> flat_body_velocity(const Vec3<T>& z, const Vec3<T>& zd) {
  return rotation<T>(z(2)).transpose() * zd;
}

template <typename T>
Vec3<T> flat_body_acceleration(const Vec3<T>& z, const Vec3<T>& zd, const Vec3<T>& zdd) {
  return zd(2) * (rotation_transpose_derivative<T>(z(2)) * zd) +
         rotation<T>(z(2)).transpose() * zdd;
}

template <typename T>
Vec3<T> flat_input(const Vec3<T>& z, const Vec3<T>& zd, const Vec3<T>& zdd,
                   const VesselParams& p) {
  const Vec3<T> nu = flat_body_velocity(z, zd);
  const Vec3<T> nud = flat_body_acceleration(z, zd, zdd);
  return inertia_matrix(p).template cast<T>() * nud + hydrodynamic_force<T>(nu, p);
}

inline VesselState theta_x(const Eigen::Vector3d& z, const Eigen::Vector3d& zd) {
  return {z, flat_body_velocity<double>(z, zd)};
}

inline ControlInput theta_tau(const Eigen::Vector3d& z, const Eigen::Vector3d& zd,
                              const Eigen::Vector3d& zdd, const VesselParams& p) {
  return ControlInput::from_vector(flat_input<double>(z, zd, zdd, p));
}

inline VesselState theta_x(const FlatPoint& fp) { return theta_x(fp.z, fp.zd); }
inline ControlInput theta_tau(const FlatPoint& fp, const VesselParams& p) {
  return theta_tau(fp.z, fp.zd, fp.zdd, p);
}

/// Time derivative of the flat input along a trajectory whose third
/// derivative is `zddd` at the evaluation point.
inline Eigen::Vector3d theta_tau_rate(const FlatPoint& fp, const Eigen::Vector3d& zddd,
                                      const VesselParams& p) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Vector3d>;
  const double psi = fp.z(2);
  const double psid = fp.zd(2);
  const double psidd = fp.zdd(2);
  const Eigen::Matrix3d Rt = rotation(psi).transpose();
  const Eigen::Matrix3d dRt = rotation_transpose_derivative(psi);
  Eigen::Matrix3d ddRt = -Rt;  // second derivative w.r.t. psi, yaw row vanishes
  ddRt(2, 2) = 0.0;

  const Eigen::Vector3d nu = Rt * fp.zd;
  const Eigen::Vector3d nud = psid * dRt * fp.zd + Rt * fp.zdd;
  const Eigen::Vector3d nudd =
      (psidd * dRt + psid * psid * ddRt) * fp.zd + 2.0 * psid * dRt * fp.zdd + Rt * zddd;

  Vec3<Ad> nu_ad;
  for (int i = 0; i < 3; ++i) nu_ad(i) = Ad(nu(i), 3, i);
  const Vec3<Ad> h = hydrodynamic_force<Ad>(nu_ad, p);
  Eigen::Matrix3d jac;
  for (int i = 0; i < 3; ++i) jac.row(i) = h(i).derivatives().transpose();
  return inertia_matrix(p) * nudd + jac * nud;
}

}  // namespace flatvessel

#endif  // FLATVESSEL_FLAT_PARAMETRIZATION_HPP
