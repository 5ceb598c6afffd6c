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

#include "flatvessel/mpc.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

namespace flatvessel {
namespace {

constexpr double kPi = std::numbers::pi;

// Vessel at rest at the origin with heading 0 over [0, 10].
ReferenceTrajectory resting_reference(const SampleGrid& grid) {
  return ReferenceTrajectory(
      FlatTrajectory::from_decision(Eigen::VectorXd::Zero(DecisionLayout(grid.segments()).size()), grid));
}

// Decision vector at rest at (dx, 0) with heading 0 and the given slack.
Eigen::VectorXd shifted_rest(const SampleGrid& grid, double dx, double slack) {
  const DecisionLayout layout(grid.segments(), true);
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(layout.size());
  xi(layout.z0(0)) = dx;
  xi(layout.slack()) = slack;
  return xi;
}

TEST(MpcCostTest, SlackWeightsAddLinearAndQuadraticTerms) {
  const SampleGrid grid = SampleGrid::uniform(0.0, 1.0, 10);
  const ReferenceTrajectory ref = resting_reference(grid);
  const MpcConfig cfg;
  const double c0 = mpc_cost(shifted_rest(grid, 0.0, 0.0), grid, cfg.q1_diag, cfg.q4, 1000.0, 100.0, ref);
  const double c1 = mpc_cost(shifted_rest(grid, 0.0, 1.0), grid, cfg.q1_diag, cfg.q4, 1000.0, 100.0, ref);
  const double c2 = mpc_cost(shifted_rest(grid, 0.0, 2.0), grid, cfg.q1_diag, cfg.q4, 1000.0, 100.0, ref);
  EXPECT_NEAR(c0, 0.0, 1e-12);
  EXPECT_NEAR(c1, 1100.0, 1e-9);
  EXPECT_NEAR(c2, 4200.0, 1e-9);
}

TEST(MpcCostTest, TerminalWeightIsQuadraticInTheDeviation) {
  const SampleGrid grid = SampleGrid::uniform(0.0, 1.0, 10);
  const ReferenceTrajectory ref = resting_reference(grid);
  const MpcConfig cfg;
  const double a = mpc_cost(shifted_rest(grid, 0.3, 0.0), grid, cfg.q1_diag, cfg.q4, 0.0, 0.0, ref);
  const double b = mpc_cost(shifted_rest(grid, 0.6, 0.0), grid, cfg.q1_diag, cfg.q4, 0.0, 0.0, ref);
  EXPECT_NEAR(a, 50.0 * 0.09, 1e-12);
  EXPECT_NEAR(b / a, 4.0, 1e-12);
}

TEST(MpcCostTest, AllWaypointCostIntegratesTheDeviation) {
  const SampleGrid grid = SampleGrid::tiered(0.0, {{0.5, 2}, {0.75, 4}, {1.78, 9}});
  const ReferenceTrajectory ref = resting_reference(grid);
  const MpcConfig cfg;
  const double d = 0.4;
  const Eigen::VectorXd xi = shifted_rest(grid, d, 0.0);
  const double J = cost_all_waypoint_match(xi.head(xi.size() - 1), grid, cfg.awm_q, ref);
  EXPECT_NEAR(J, 100.0 * d * d * grid.t_end(), 1e-9);
}

TEST(MpcCostTest, SlackRelaxesObstacleRowsOnly) {
  const SampleGrid grid = SampleGrid::uniform(0.0, 1.0, 4);
  const ObstacleField field({{0.0, 0.0, 1.0, 1.0, 0.0, 1}}, 5.0);
  const Eigen::VectorXd xi = shifted_rest(grid, 0.0, 0.25);
  const Eigen::VectorXd g = slack_constraints(xi, grid, InputBounds{}, field);
  const Eigen::VectorXd base = inequality_constraints(xi.head(xi.size() - 1), grid, InputBounds{},
                                                      ObstacleField());
  ASSERT_EQ(g.size(), base.size() + grid.knots() + 1);
  EXPECT_LT((g.head(base.size()) - base).cwiseAbs().maxCoeff(), 1e-15);
  // The origin is the center of the unit circle, where f = 0.
  for (int k = 0; k < grid.knots(); ++k) EXPECT_NEAR(g(base.size() + k), 1.0 - 0.25, 1e-12);
  EXPECT_EQ(g(g.size() - 1), -0.25);
  EXPECT_THROW(slack_constraints(xi.head(xi.size() - 1), grid, InputBounds{}, field), ContractViolation);
}

TEST(EncounterFieldTest, MovingShapeIsHeldAtClosestApproach) {
  BasicShape mover{5.0, 20.0, 1.0, 1.0, 0.0, 1, ShapeMotion{65.0, 0.08, 0.0}};
  BasicShape wall{0.0, 0.0, 2.0, 1.0, 0.0, 2, std::nullopt};
  const ObstacleField field({wall, mover}, 5.0);
  // Path (10 lam, 20) meets the mover (5 + 4 lam, 20) at lam = 5/6.
  const ObstacleField e = encounter_field(field, {0.0, 20.0}, {10.0, 20.0}, 65.0, 115.0);
  ASSERT_EQ(e.shapes().size(), 2u);
  EXPECT_FALSE(e.shapes()[0].motion.has_value());
  EXPECT_EQ(e.shapes()[0].xo, 0.0);
  EXPECT_FALSE(e.shapes()[1].motion.has_value());
  EXPECT_NEAR(e.shapes()[1].xo, 5.0 + 4.0 * 5.0 / 6.0, 0.02);
  EXPECT_EQ(e.shapes()[1].yo, 20.0);
}

TEST(CrossingOffsetTest, SignFollowsSideOfTravelDirection) {
  // North-going straight line at 1 m/s from the origin.
  const SampleGrid grid = SampleGrid::uniform(0.0, 1.0, 10);
  const DecisionLayout layout(grid.segments());
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(layout.size());
  xi(layout.zd0(0)) = 1.0;
  const auto plan = FlatTrajectory::from_decision(xi, grid);
  EXPECT_NEAR(crossing_offset(plan, Eigen::Vector2d(5.0, 1.5)), 1.5, 1e-9);
  EXPECT_NEAR(crossing_offset(plan, Eigen::Vector2d(5.0, -0.7)), -0.7, 1e-9);
  // A shape moving west crosses the path at t = 5: the closest approach is
  // at its crossing, where it sits on the path.
  BasicShape mover{5.0, 2.5, 1.0, 1.0, 0.0, 1, ShapeMotion{0.0, 0.0, -0.5}};
  EXPECT_NEAR(crossing_offset(plan, mover), 0.0, 0.05);
}

class MpcStepTest : public ::testing::Test {
 protected:
  void SetUp() override {
    OcpSpec s;
    s.x0.eta << 0.0, 0.0, kPi / 2;
    s.x0.nu.setZero();
    s.xe.eta << 0.0, 6.0, kPi / 2;
    s.xe.nu.setZero();
    s.grid = SampleGrid::uniform(0.0, 2.0, 15);
    s.planning.bounds = {-5.0, 5.0, -2.0, 8.0};
    s.planning.nx = 10;
    s.planning.ny = 14;
    const PlanResult r = plan(s);
    ASSERT_TRUE(r.certified(1e-6));
    ref_ = ReferenceTrajectory(r.trajectory);
    cfg_.planning = s.planning;
  }

  ReferenceTrajectory ref_;
  MpcConfig cfg_;
  VesselParams params_;
};

TEST_F(MpcStepTest, FreeWaterStepOnTheReferenceHasNoSlack) {
  const MpcIterate it = mpc_step(0.0, ref_.state(0.0), ControlInput{}, ref_, ObstacleField(),
                                 params_, cfg_);
  EXPECT_FALSE(it.fallback) << it.report.message;
  EXPECT_NEAR(it.slack, 0.0, 1e-9);
  EXPECT_LT(it.terminal_deviation, 0.2);
  EXPECT_LT((theta_x(it.plan.sample(0)).vector() - ref_.state(0.0).vector()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(MpcStepTest, PredictionModeControlsTheModeledObstacle) {
  const BasicShape mover{40.0, 40.0, 1.0, 1.0, 0.0, 1, ShapeMotion{1.0, 0.08, 0.0}};
  const ObstacleField field({mover}, 5.0);
  MpcConfig frozen = cfg_;
  frozen.prediction = ObstaclePrediction::kFrozen;
  const MpcIterate a = mpc_step(2.0, ref_.state(2.0), ControlInput{}, ref_, field, params_, frozen);
  const MpcIterate b = mpc_step(2.0, ref_.state(2.0), ControlInput{}, ref_, field, params_, cfg_);
  ASSERT_EQ(a.field.shapes().size(), 1u);
  EXPECT_FALSE(a.field.shapes()[0].motion.has_value());
  EXPECT_NEAR(a.field.shapes()[0].center(10.0).x(), 40.08, 1e-12);
  EXPECT_NEAR(b.field.shapes()[0].center(10.0).x(), 40.08 + 0.08 * 8.0, 1e-12);
  // Before the shape starts moving there is nothing to extrapolate.
  const MpcIterate c = mpc_step(0.5, ref_.state(0.5), ControlInput{}, ref_, field, params_, cfg_);
  EXPECT_NEAR(c.field.shapes()[0].center(10.0).x(), 40.0, 1e-12);
}

TEST_F(MpcStepTest, AllWaypointLoopTracksTheReferenceInFreeWater) {
  MpcConfig cfg = cfg_;
  cfg.cost = TrackingCost::kAllWaypointMatch;
  const ClosedLoopResult r = closed_loop(ref_, ref_.state(0.0), ControlInput{}, ObstacleField(),
                                         params_, PlantSetup{}, cfg);
  EXPECT_EQ(r.fallback_count, 0);
  ASSERT_FALSE(r.samples.empty());
  EXPECT_NEAR(r.samples.back().t, ref_.t_end(), 1e-9);
  for (const auto& s : r.samples) {
    EXPECT_LT((s.state.eta.head<2>() - ref_.state(s.t).eta.head<2>()).norm(), 0.01) << "t = " << s.t;
    EXPECT_NEAR(s.tau.tau_v, 0.0, 1e-12);
  }
}

TEST_F(MpcStepTest, LastWaypointLoopSpendsLessInputThanAllWaypoint) {
  auto input_energy = [](const ClosedLoopResult& r) {
    double e = 0.0;
    for (std::size_t i = 1; i < r.samples.size(); ++i) {
      const double dt = r.samples[i].t - r.samples[i - 1].t;
      e += 0.5 * dt * (std::pow(r.samples[i].tau.tau_u, 2) + std::pow(r.samples[i - 1].tau.tau_u, 2));
    }
    return e;
  };
  MpcConfig awm = cfg_;
  awm.cost = TrackingCost::kAllWaypointMatch;
  const ClosedLoopResult lw = closed_loop(ref_, ref_.state(0.0), ControlInput{}, ObstacleField(),
                                          params_, PlantSetup{}, cfg_);
  const ClosedLoopResult aw = closed_loop(ref_, ref_.state(0.0), ControlInput{}, ObstacleField(),
                                          params_, PlantSetup{}, awm);
  EXPECT_EQ(lw.fallback_count, 0);
  EXPECT_LT(input_energy(lw), input_energy(aw));
  // The terminal target lies a horizon ahead, so the vessel lags but stays
  // near the reference.
  for (const auto& s : lw.samples) {
    EXPECT_LT((s.state.eta.head<2>() - ref_.state(s.t).eta.head<2>()).norm(), 1.5) << "t = " << s.t;
  }
}

TEST_F(MpcStepTest, RejectsNonFiniteMeasurement) {
  VesselState bad = ref_.state(0.0);
  bad.eta(0) = std::nan("");
  EXPECT_THROW(mpc_step(0.0, bad, ControlInput{}, ref_, ObstacleField(), params_, cfg_),
               ContractViolation);
}

TEST(MpcConfigTest, ValidationRejectsBadTiers) {
  MpcConfig cfg;
  cfg.tiers = {{0.75, 2}, {0.5, 3}};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.tiers = {};
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = MpcConfig{};
  cfg.q4(0, 0) = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_NEAR(MpcConfig{}.horizon(), 0.5 * 2 + 0.75 * 4 + 1.78 * 9, 1e-12);
}

}  // namespace
}  // namespace flatvessel
