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

#include "flatvessel/initial_guess.hpp"

#include <cmath>
#include <numbers>
#include <queue>
#include <random>

#include <gtest/gtest.h>

namespace flatvessel {
namespace {

// Plain Dijkstra over the same 8-connected graph.
double dijkstra(const OccupancyGrid& g, Cell s, Cell t) {
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

TEST(AstarTest, CostEqualsDijkstraOnRandomGrids) {
  std::mt19937 rng(99);
  std::bernoulli_distribution blocked(0.3);
  int compared = 0;
  for (int trial = 0; trial < 60; ++trial) {
    OccupancyGrid g({-1, 9, -1, 31}, 20, 40);
    for (int i = 0; i < 20; ++i) {
      for (int j = 0; j < 40; ++j) g.set_occupied(i, j, blocked(rng));
    }
    g.set_occupied(0, 0, false);
    g.set_occupied(19, 39, false);
    const double ref = dijkstra(g, {0, 0}, {19, 39});
    if (std::isinf(ref)) {
      EXPECT_THROW(astar(g, {0, 0}, {19, 39}), UnreachableError);
      continue;
    }
    const CellPath p = astar(g, {0, 0}, {19, 39});
    EXPECT_NEAR(p.cost, ref, 1e-12);
    ++compared;
  }
  EXPECT_GT(compared, 10);
}

TEST(AstarTest, PathIsConnectedAndFree) {
  OccupancyGrid g({0, 10, 0, 10}, 10, 10);
  for (int j = 0; j < 8; ++j) g.set_occupied(5, j, true);
  const CellPath p = astar(g, {0, 0}, {9, 0});
  ASSERT_GE(p.cells.size(), 2u);
  for (std::size_t k = 1; k < p.cells.size(); ++k) {
    EXPECT_LE(std::abs(p.cells[k].i - p.cells[k - 1].i), 1);
    EXPECT_LE(std::abs(p.cells[k].j - p.cells[k - 1].j), 1);
    EXPECT_FALSE(g.occupied(p.cells[k].i, p.cells[k].j));
  }
  EXPECT_THROW(astar(g, {5, 0}, {9, 0}), ContractViolation);
}

TEST(RefinePathTest, KeepsPinnedEndsAndObstacleAdjacentCells) {
  OccupancyGrid g({0, 10, 0, 10}, 10, 10);
  g.set_occupied(5, 5, true);
  const CellPath p = astar(g, {0, 5}, {9, 5});
  const GridPath r = refine_path(p, g, {0.2, 5.3}, {9.7, 5.4});
  EXPECT_EQ(r.waypoints.front(), Eigen::Vector2d(0.2, 5.3));
  EXPECT_EQ(r.waypoints.back(), Eigen::Vector2d(9.7, 5.4));
  EXPECT_GE(r.waypoints.size(), 3u);
}

TEST(MollifierTest, UnitMassAndCompactSupport) {
  for (double eps : {0.1, 0.5, 1.6}) {
    const int n = 20000;
    double mass = 0.0;
    for (int k = 0; k < n; ++k) {
      // Simpson on [-eps, eps].
      const double h = 2 * eps / n;
      const double t0 = -eps + k * h;
      mass += h / 6 * (mollifier_phi(t0, eps) + 4 * mollifier_phi(t0 + h / 2, eps) + mollifier_phi(t0 + h, eps));
    }
    EXPECT_NEAR(mass, 1.0, 1e-10);
    EXPECT_EQ(mollifier_phi(eps, eps), 0.0);
    EXPECT_EQ(mollifier_phi(-1.01 * eps, eps), 0.0);
    EXPECT_EQ(mollifier_phi_dot(1.5 * eps, eps), 0.0);
  }
}

TEST(MollifierTest, DerivativeMatchesFiniteDifference) {
  const double eps = 0.7, h = 1e-6;
  for (double t = -0.69; t < 0.69; t += 0.05) {
    const double fd = (mollifier_phi(t + h, eps) - mollifier_phi(t - h, eps)) / (2 * h);
    EXPECT_NEAR(mollifier_phi_dot(t, eps), fd, 1e-6);
  }
}

TEST(MollifierTest, MirroredSignalHitsBoundaryValues) {
  VelocitySignal sig;
  sig.initial = 0.4;
  sig.steps = {{3.0, -0.2}, {7.0, 0.5}};
  const auto ext = mirror_signal(sig, 0.0, 10.0, 0.0, 0.1);
  EXPECT_NEAR(smoothed_velocity(ext, 0.0, 0.5), 0.0, 1e-14);
  EXPECT_NEAR(smoothed_velocity(ext, 10.0, 0.5), 0.1, 1e-14);
  EXPECT_NEAR(smoothed_velocity(ext, 5.0, 0.5), sig.value(5.0), 1e-14);
}

TEST(MollifierTest, DeviationShrinksLinearlyWithWidth) {
  VelocitySignal sig;
  sig.initial = 0.3;
  sig.steps = {{4.0, 0.2}, {9.0, -0.4}};
  const auto ext = mirror_signal(sig, 0.0, 14.0, 0.3, -0.1);
  auto l1 = [&](double eps) {
    double acc = 0.0;
    const int n = 140000;
    for (int k = 0; k < n; ++k) {
      const double t = 1.0 + (12.0 - 1.0) * (k + 0.5) / n;
      acc += std::abs(smoothed_velocity(ext, t, eps) - sig.value(t)) * (11.0 / n);
    }
    return acc;
  };
  const double ratio = l1(0.25) / l1(0.5);
  EXPECT_GT(ratio, 0.3);
  EXPECT_LT(ratio, 0.7);
}

TEST(AssembleGuessTest, MatchesBoundaryStatesAndAvoidsOccupiedCells) {
  const double deg = std::numbers::pi / 180.0;
  const ObstacleField f({{6.5, 14, 2, 5, 0, 2}, {1, 15, 2, 5, 0, 3}, {6, 8, 10, 4, -15 * deg, 1},
                         {-1, 18, 16, 2, -10 * deg, 1}},
                        5);
  VesselState x0, xe;
  x0.eta << 0, 0, std::numbers::pi / 2;
  x0.nu.setZero();
  xe.eta << 1, 30, std::numbers::pi / 2;
  xe.nu.setZero();
  const SampleGrid grid = SampleGrid::uniform(0.0, 2.0, 60);
  const InitialGuess g = assemble_guess(x0, xe, f, PlanningGridSpec{}, grid, {0.5, 0.5, 1.6});
  const auto traj = FlatTrajectory::from_decision(g.xi, grid);
  EXPECT_LT((traj.sample(0).z - x0.eta).norm(), 1e-12);
  EXPECT_LT(traj.sample(0).zd.norm(), 1e-12);
  EXPECT_LT(traj.sample(60).zd.norm(), 1e-9);
  EXPECT_LT((traj.sample(60).z.head<2>() - xe.eta.head<2>()).norm(), 0.5);
  EXPECT_GT(g.path.waypoints.size(), 2u);
  const OccupancyGrid occ = occupancy_grid(f, PlanningGridSpec{}.bounds, 20, 40);
  for (const Cell& c : g.cells.cells) EXPECT_FALSE(occ.occupied(c.i, c.j));
}

}  // namespace
}  // namespace flatvessel
