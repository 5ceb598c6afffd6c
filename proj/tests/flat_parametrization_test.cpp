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

#include "flatvessel/flat_parametrization.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

namespace flatvessel {
namespace {

// z(t) = a + b t + sum_j c_j sin(w_j t + p_j), per component.
struct SmoothFlat {
  Eigen::Vector3d a, b;
  std::array<Eigen::Vector3d, 2> c, w, p;

  FlatPoint at(double t) const {
    FlatPoint fp;
    fp.z = a + b * t;
    fp.zd = b;
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
  Eigen::Vector3d jerk(double t) const {
    Eigen::Vector3d j3 = Eigen::Vector3d::Zero();
    for (int j = 0; j < 2; ++j) {
      for (int i = 0; i < 3; ++i) {
        j3(i) -= c[j](i) * std::pow(w[j](i), 3) * std::cos(w[j](i) * t + p[j](i));
      }
    }
    return j3;
  }
};

SmoothFlat random_flat(std::mt19937& rng) {
  std::uniform_real_distribution<double> pos(-5, 5), vel(-0.3, 0.3), amp(0.1, 1.0),
      freq(0.05, 0.4), ph(0, 6.28);
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

TEST(FlatParametrizationTest, StateMapRotatesIntoTheBodyFrame) {
  const Eigen::Vector3d z(1.0, 2.0, std::numbers::pi / 2);
  const Eigen::Vector3d zd(0.0, 0.5, 0.1);
  const VesselState x = theta_x(z, zd);
  EXPECT_NEAR(x.nu(0), 0.5, 1e-15);  // heading east, moving east
  EXPECT_NEAR(x.nu(1), 0.0, 1e-15);
  EXPECT_NEAR(x.nu(2), 0.1, 1e-15);
}

TEST(FlatParametrizationTest, InputMatchesModelDerivative) {
  // tau = M nu_dot + (C + D) nu, with nu_dot from finite differences of theta_x.
  std::mt19937 rng(7);
  const VesselParams p;
  const VesselModel model(p);
  for (int trial = 0; trial < 20; ++trial) {
    const SmoothFlat f = random_flat(rng);
    const double t = 3.0 + trial;
    const FlatPoint fp = f.at(t);
    const ControlInput tau = theta_tau(fp, p);
    const double h = 1e-5;
    const Eigen::Vector3d nud =
        (theta_x(f.at(t + h)).nu - theta_x(f.at(t - h)).nu) / (2.0 * h);
    const Vector6d dx = model.state_derivative(theta_x(fp).vector(), tau.vector());
    EXPECT_LT((dx.tail<3>() - nud).norm(), 1e-7);
  }
}

TEST(FlatParametrizationTest, InputRateMatchesFiniteDifference) {
  std::mt19937 rng(11);
  const VesselParams p;
  for (int trial = 0; trial < 20; ++trial) {
    const SmoothFlat f = random_flat(rng);
    const double t = 1.0 + 2.0 * trial;
    const double h = 1e-5;
    const Eigen::Vector3d fd =
        (theta_tau(f.at(t + h), p).vector() - theta_tau(f.at(t - h), p).vector()) / (2.0 * h);
    const Eigen::Vector3d rate = theta_tau_rate(f.at(t), f.jerk(t), p);
    EXPECT_LT((rate - fd).norm(), 1e-6 * (1.0 + fd.norm()));
  }
}

TEST(FlatParametrizationTest, RoundTripThroughIndependentIntegrator) {
  // Feed theta_tau to the plant and integrate with Boost.Odeint.
  using State = std::array<double, 6>;
  namespace ode = boost::numeric::odeint;
  std::mt19937 rng(3);
  const VesselParams p;
  const VesselModel model(p);
  for (int trial = 0; trial < 5; ++trial) {
    const SmoothFlat f = random_flat(rng);
    const Vector6d x0 = theta_x(f.at(0.0)).vector();
    State s;
    for (int i = 0; i < 6; ++i) s[static_cast<std::size_t>(i)] = x0(i);
    auto rhs = [&](const State& x, State& dx, double t) {
      Vector6d v;
      for (int i = 0; i < 6; ++i) v(i) = x[static_cast<std::size_t>(i)];
      const Vector6d d = model.state_derivative(v, theta_tau(f.at(t), p).vector());
      for (int i = 0; i < 6; ++i) dx[static_cast<std::size_t>(i)] = d(i);
    };
    ode::integrate_adaptive(ode::make_controlled(1e-12, 1e-12, ode::runge_kutta_dopri5<State>()), rhs,
                            s, 0.0, 40.0, 0.01);
    const FlatPoint end = f.at(40.0);
    EXPECT_NEAR(s[0], end.z(0), 1e-6);
    EXPECT_NEAR(s[1], end.z(1), 1e-6);
    EXPECT_NEAR(s[2], end.z(2), 1e-6);
  }
}

}  // namespace
}  // namespace flatvessel
