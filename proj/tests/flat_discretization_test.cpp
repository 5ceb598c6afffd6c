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

#include "flatvessel/flat_discretization.hpp"

#include <array>
#include <random>

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

namespace flatvessel {
namespace {

// Integrates z''' = piecewise constant slope with Boost.Odeint, segment by
// segment, from (z0, zd0, zdd[0]).
Eigen::Vector2d odeint_chain(const Eigen::Vector2d& zeta0, const std::vector<double>& zdd,
                             const SampleGrid& g) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 3>;
  State s{zeta0(0), zeta0(1), zdd[0]};
  for (int k = 0; k < g.segments(); ++k) {
    const double slope = (zdd[static_cast<std::size_t>(k) + 1] - zdd[static_cast<std::size_t>(k)]) / g.step(k);
    auto rhs = [slope](const State& x, State& dx, double) {
      dx[0] = x[1];
      dx[1] = x[2];
      dx[2] = slope;
    };
    ode::integrate_adaptive(ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5<State>()), rhs, s,
                            g.time(k), g.time(k + 1), g.step(k) / 4);
    s[2] = zdd[static_cast<std::size_t>(k) + 1];
  }
  return {s[0], s[1]};
}

TEST(SampleGridTest, UniformAndTieredKnots) {
  const SampleGrid u = SampleGrid::uniform(0.0, 2.0, 60);
  EXPECT_EQ(u.knots(), 61);
  EXPECT_DOUBLE_EQ(u.t_end(), 120.0);
  const SampleGrid t = SampleGrid::tiered(10.0, {{0.5, 2}, {0.75, 4}, {1.78, 9}});
  EXPECT_EQ(t.segments(), 15);
  EXPECT_NEAR(t.t_end() - 10.0, 20.02, 1e-12);
  EXPECT_DOUBLE_EQ(t.step(1), 0.5);
  EXPECT_DOUBLE_EQ(t.step(2), 0.75);
  EXPECT_DOUBLE_EQ(t.step(14), 1.78);
}

TEST(SampleGridTest, TrapezoidWeightsIntegrateLinearFunctionsExactly) {
  const SampleGrid g = SampleGrid::tiered(1.0, {{0.3, 3}, {1.1, 5}});
  double sum = 0.0, lin = 0.0;
  for (int k = 0; k < g.knots(); ++k) {
    sum += g.trapezoid_weight(k);
    lin += g.trapezoid_weight(k) * (2.0 * g.time(k) + 1.0);
  }
  const double a = g.t0(), b = g.t_end();
  EXPECT_NEAR(sum, b - a, 1e-12);
  EXPECT_NEAR(lin, (b * b + b) - (a * a + a), 1e-12);
}

TEST(SampleGridTest, RejectsNonIncreasingTimes) {
  EXPECT_THROW(SampleGrid::uniform(0.0, 0.0, 3), ContractViolation);
  EXPECT_THROW(SampleGrid::uniform(0.0, 1.0, 0), ContractViolation);
}

TEST(PropagateTest, MatchesIndependentIntegratorOnMixedGrids) {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> step(0.1, 3.0), val(-1.0, 1.0);
  std::uniform_int_distribution<int> nseg(1, 25);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = nseg(rng);
    std::vector<double> steps(static_cast<std::size_t>(n));
    for (double& T : steps) T = step(rng);
    const SampleGrid g(val(rng), steps);
    std::vector<double> zdd(static_cast<std::size_t>(n) + 1);
    for (double& a : zdd) a = val(rng);
    const Eigen::Vector2d zeta0(val(rng), val(rng));
    const auto out = propagate(zeta0, zdd, g);
    const Eigen::Vector2d ref = odeint_chain(zeta0, zdd, g);
    worst = std::max(worst, (out.back() - ref).cwiseAbs().maxCoeff() / (1.0 + ref.norm()));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(PropagateTest, ClosedFormTransitionAgreesWithRecursion) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const SampleGrid g = SampleGrid::tiered(0.0, {{0.5, 2}, {0.75, 4}, {1.78, 9}});
  std::vector<double> zdd(static_cast<std::size_t>(g.knots()));
  for (double& a : zdd) a = val(rng);
  const Eigen::Vector2d zeta0(val(rng), val(rng));
  const TransitionMatrices tm = build_h_matrix(g);
  const Eigen::Map<const Eigen::VectorXd> a(zdd.data(), g.knots());
  const Eigen::Vector2d closed = tm.A_N * zeta0 + tm.H_N * a;
  EXPECT_LT((closed - propagate(zeta0, zdd, g).back()).norm(), 1e-12);
}

TEST(PropagateTest, RejectsWrongSampleCount) {
  const SampleGrid g = SampleGrid::uniform(0.0, 1.0, 4);
  const std::vector<double> zdd(3, 0.0);
  EXPECT_THROW(propagate(Eigen::Vector2d::Zero(), zdd, g), ContractViolation);
}

TEST(DecisionLayoutTest, PackUnpackRoundTrip) {
  const DecisionLayout layout(7, true);
  EXPECT_EQ(layout.size(), 3 * 10 + 1);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Eigen::VectorXd xi(layout.size());
  for (int i = 0; i < xi.size(); ++i) xi(i) = val(rng);
  EXPECT_EQ(pack(unpack(xi, layout), layout), xi);
  EXPECT_THROW(unpack(Eigen::VectorXd::Zero(5), layout), ContractViolation);
  EXPECT_THROW(DecisionLayout(3).slack(), ContractViolation);
}

TEST(FlatTrajectoryTest, DenseEvaluationIsContinuousAndHitsKnots) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  const SampleGrid g = SampleGrid::uniform(0.0, 2.0, 10);
  const DecisionLayout layout(10);
  Eigen::VectorXd xi(layout.size());
  for (int i = 0; i < xi.size(); ++i) xi(i) = val(rng);
  const auto traj = FlatTrajectory::from_decision(xi, g);
  for (int k = 1; k < g.segments(); ++k) {
    const double t = g.time(k);
    const double d = 1e-9;
    const FlatPoint left = traj.evaluate(t - d);
    const FlatPoint right = traj.evaluate(t + d);
    const FlatPoint at = traj.evaluate(t);
    // One-sided Taylor predictions from each side must agree.
    EXPECT_LT(((left.z + d * left.zd) - (right.z - d * right.zd)).norm(), 1e-12);
    EXPECT_LT(((left.zd + d * left.zdd) - (right.zd - d * right.zdd)).norm(), 1e-12);
    EXPECT_LT((left.zdd - right.zdd).norm(), 1e-7);
    EXPECT_LT((at.z - traj.sample(k).z).norm(), 1e-12);
  }
}

}  // namespace
}  // namespace flatvessel
