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

#ifndef FLATVESSEL_FLAT_DISCRETIZATION_HPP
#define FLATVESSEL_FLAT_DISCRETIZATION_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/flat_parametrization.hpp"

namespace flatvessel {

/// Knots t_0 < t_1 < ... < t_N built from segment lengths. Runs of equal
/// segment lengths ("tiers") are the usual case.
class SampleGrid {
 public:
  SampleGrid() = default;
  SampleGrid(double t0, std::vector<double> steps) : t0_(t0), steps_(std::move(steps)) {
    if (steps_.empty()) throw ContractViolation("SampleGrid: at least one segment required");
    for (double T : steps_) {
      if (!(T > 0.0) || !std::isfinite(T)) {
        throw ContractViolation("SampleGrid: segment lengths must be positive and finite");
      }
    }
    times_.resize(steps_.size() + 1);
    times_[0] = t0_;
    for (std::size_t k = 0; k < steps_.size(); ++k) times_[k + 1] = times_[k] + steps_[k];
  }

  static SampleGrid uniform(double t0, double step, int segments) {
    if (segments < 1) throw ContractViolation("SampleGrid::uniform: segments must be >= 1");
    return {t0, std::vector<double>(static_cast<std::size_t>(segments), step)};
  }

  /// Consecutive tiers of (step, count).
  static SampleGrid tiered(double t0, const std::vector<std::pair<double, int>>& tiers) {
    std::vector<double> steps;
    for (auto [T, n] : tiers) {
      if (n < 0) throw ContractViolation("SampleGrid::tiered: negative tier count");
      steps.insert(steps.end(), static_cast<std::size_t>(n), T);
    }
    return {t0, std::move(steps)};
  }

  int segments() const { return static_cast<int>(steps_.size()); }
  int knots() const { return segments() + 1; }
  double t0() const { return t0_; }
  double t_end() const { return times_.back(); }
  double duration() const { return t_end() - t0_; }
  /// Length of segment k+1 in the 1-based notation, i.e. [t_k, t_{k+1}].
  double step(int k) const { return steps_.at(static_cast<std::size_t>(k)); }
  double time(int k) const { return times_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& steps() const { return steps_; }
  const std::vector<double>& times() const { return times_; }

  /// Trapezoidal weight of knot k.
  double trapezoid_weight(int k) const {
    const int n = segments();
    double w = 0.0;
    if (k > 0) w += 0.5 * step(k - 1);
    if (k < n) w += 0.5 * step(k);
    return w;
  }

  /// Segment containing t (the last segment owns t_N).
  int locate(double t) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(t_end()));
    if (t < t0_ - slack || t > t_end() + slack) {
      throw std::out_of_range("SampleGrid: t=" + std::to_string(t) + " outside [" +
                              std::to_string(t0_) + ", " + std::to_string(t_end()) + "]");
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    int k = static_cast<int>(it - times_.begin()) - 1;
    return std::clamp(k, 0, segments() - 1);
  }

 private:
  double t0_ = 0.0;
  std::vector<double> steps_;
  std::vector<double> times_;
};

inline Eigen::Matrix2d a_matrix(double T) {
  Eigen::Matrix2d A;
  A << 1.0, T, 0.0, 1.0;
  return A;
}

/// Columns b1, b2 weight the accelerations at the start and end of a
/// segment along which the acceleration varies linearly.
inline Eigen::Matrix2d b_matrix(double T) {
  Eigen::Matrix2d B;
  B << T * T / 3.0, T * T / 6.0, T / 2.0, T / 2.0;
  return B;
}

/// Position/velocity at every knot for one flat output dimension.
inline std::vector<Eigen::Vector2d> propagate(const Eigen::Vector2d& zeta0,
                                              std::span<const double> zdd,
                                              const SampleGrid& grid) {
  if (static_cast<int>(zdd.size()) != grid.knots()) {
    throw ContractViolation("propagate: expected " + std::to_string(grid.knots()) +
                            " acceleration samples, got " + std::to_string(zdd.size()));
  }
  std::vector<Eigen::Vector2d> out(zdd.size());
  out[0] = zeta0;
  for (int k = 0; k < grid.segments(); ++k) {
    const double T = grid.step(k);
    const Eigen::Vector2d& s = out[static_cast<std::size_t>(k)];
    const double a0 = zdd[static_cast<std::size_t>(k)];
    const double a1 = zdd[static_cast<std::size_t>(k) + 1];
    out[static_cast<std::size_t>(k) + 1] = {s(0) + T * s(1) + T * T * (a0 / 3.0 + a1 / 6.0),
                                            s(1) + 0.5 * T * (a0 + a1)};
  }
  return out;
}

/// Closed-form transition zeta_N = A_N zeta_0 + H_N zdd[0..N]. Column j of
/// H_N multiplies the acceleration sample at knot j.
struct TransitionMatrices {
  Eigen::Matrix2d A_N;
  Eigen::Matrix<double, 2, Eigen::Dynamic> H_N;
};

inline TransitionMatrices build_h_matrix(const SampleGrid& grid) {
  const int n = grid.segments();
  TransitionMatrices out;
  out.A_N = Eigen::Matrix2d::Identity();
  out.H_N = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, n + 1);
  // Products A(T_N) ... A(T_{k+2}) are accumulated from the right end.
  Eigen::Matrix2d tail = Eigen::Matrix2d::Identity();
  for (int k = n - 1; k >= 0; --k) {
    const Eigen::Matrix2d B = b_matrix(grid.step(k));
    out.H_N.col(k) += tail * B.col(0);
    out.H_N.col(k + 1) += tail * B.col(1);
    tail = tail * a_matrix(grid.step(k));
  }
  out.A_N = tail;
  return out;
}

/// Layout of the decision vector: for each flat dimension i the initial
/// position and velocity followed by the N+1 acceleration samples, and an
/// optional trailing slack variable.
class DecisionLayout {
 public:
  DecisionLayout(int segments, bool with_slack = false)
      : segments_(segments), with_slack_(with_slack) {
    if (segments < 1) throw ContractViolation("DecisionLayout: segments must be >= 1");
  }

  int segments() const { return segments_; }
  int block() const { return segments_ + 3; }
  int size() const { return 3 * block() + (with_slack_ ? 1 : 0); }
  bool has_slack() const { return with_slack_; }

  int z0(int i) const { return i * block(); }
  int zd0(int i) const { return i * block() + 1; }
  int zdd(int i, int k) const { return i * block() + 2 + k; }
  int slack() const {
    if (!with_slack_) throw ContractViolation("DecisionLayout: no slack variable");
    return 3 * block();
  }

 private:
  int segments_;
  bool with_slack_;
};

/// Unpacked view of a decision vector.
struct FlatParameters {
  Eigen::Vector3d z0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d zd0 = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 3, Eigen::Dynamic> zdd;  // 3 x (N+1)
  double slack = 0.0;
};

inline Eigen::VectorXd pack(const FlatParameters& p, const DecisionLayout& layout) {
  if (p.zdd.cols() != layout.segments() + 1) {
    throw ContractViolation("pack: acceleration samples do not match the layout");
  }
  Eigen::VectorXd xi(layout.size());
  for (int i = 0; i < 3; ++i) {
    xi(layout.z0(i)) = p.z0(i);
    xi(layout.zd0(i)) = p.zd0(i);
    for (int k = 0; k <= layout.segments(); ++k) xi(layout.zdd(i, k)) = p.zdd(i, k);
  }
  if (layout.has_slack()) xi(layout.slack()) = p.slack;
  return xi;
}

inline FlatParameters unpack(const Eigen::VectorXd& xi, const DecisionLayout& layout) {
  if (xi.size() != layout.size()) {
    throw ContractViolation("unpack: decision vector has length " + std::to_string(xi.size()) +
                            ", expected " + std::to_string(layout.size()));
  }
  FlatParameters p;
  p.zdd.resize(3, layout.segments() + 1);
  for (int i = 0; i < 3; ++i) {
    p.z0(i) = xi(layout.z0(i));
    p.zd0(i) = xi(layout.zd0(i));
    for (int k = 0; k <= layout.segments(); ++k) p.zdd(i, k) = xi(layout.zdd(i, k));
  }
  if (layout.has_slack()) p.slack = xi(layout.slack());
  return p;
}

/// Flat output sampled at the knots, with exact dense evaluation in between.
class FlatTrajectory {
 public:
  FlatTrajectory() = default;
  FlatTrajectory(SampleGrid grid, std::vector<FlatPoint> samples)
      : grid_(std::move(grid)), samples_(std::move(samples)) {
    if (static_cast<int>(samples_.size()) != grid_.knots()) {
      throw ContractViolation("FlatTrajectory: one sample per knot required");
    }
  }

  static FlatTrajectory from_parameters(const FlatParameters& p, const SampleGrid& grid) {
    if (p.zdd.cols() != grid.knots()) {
      throw ContractViolation("FlatTrajectory: acceleration samples do not match the grid");
    }
    std::vector<FlatPoint> samples(static_cast<std::size_t>(grid.knots()));
    for (int i = 0; i < 3; ++i) {
      std::vector<double> a(static_cast<std::size_t>(grid.knots()));
      for (int k = 0; k < grid.knots(); ++k) a[static_cast<std::size_t>(k)] = p.zdd(i, k);
      const auto zeta = propagate({p.z0(i), p.zd0(i)}, a, grid);
      for (int k = 0; k < grid.knots(); ++k) {
        auto& s = samples[static_cast<std::size_t>(k)];
        s.z(i) = zeta[static_cast<std::size_t>(k)](0);
        s.zd(i) = zeta[static_cast<std::size_t>(k)](1);
        s.zdd(i) = a[static_cast<std::size_t>(k)];
      }
    }
    return {grid, std::move(samples)};
  }

  static FlatTrajectory from_decision(const Eigen::VectorXd& xi, const SampleGrid& grid) {
    return from_parameters(unpack(xi, DecisionLayout(grid.segments(), xi.size() % 3 == 1)),
                           grid);
  }

  const SampleGrid& grid() const { return grid_; }
  const std::vector<FlatPoint>& samples() const { return samples_; }
  const FlatPoint& sample(int k) const { return samples_.at(static_cast<std::size_t>(k)); }
  double t0() const { return grid_.t0(); }
  double t_end() const { return grid_.t_end(); }

  /// Acceleration interpolates linearly between knots; velocity and
  /// position are its exact integrals.
  FlatPoint evaluate(double t) const {
    const int k = grid_.locate(t);
    const FlatPoint& a = samples_[static_cast<std::size_t>(k)];
    const FlatPoint& b = samples_[static_cast<std::size_t>(k) + 1];
    const double T = grid_.step(k);
    const double s = t - grid_.time(k);
    const Eigen::Vector3d slope = (b.zdd - a.zdd) / T;
    FlatPoint out;
    out.zdd = a.zdd + slope * s;
    out.zd = a.zd + a.zdd * s + slope * (s * s / 2.0);
    out.z = a.z + a.zd * s + a.zdd * (s * s / 2.0) + slope * (s * s * s / 6.0);
    return out;
  }

  /// Piecewise-constant third derivative on the segment containing t.
  Eigen::Vector3d jerk(double t) const {
    const int k = grid_.locate(t);
    return (samples_[static_cast<std::size_t>(k) + 1].zdd - samples_[static_cast<std::size_t>(k)].zdd) /
           grid_.step(k);
  }

  VesselState state(double t) const { return theta_x(evaluate(t)); }
  ControlInput input(double t, const VesselParams& p) const { return theta_tau(evaluate(t), p); }

 private:
  SampleGrid grid_;
  std::vector<FlatPoint> samples_;
};

inline FlatPoint evaluate_continuous(const Eigen::VectorXd& xi, const SampleGrid& grid, double t) {
  return FlatTrajectory::from_decision(xi, grid).evaluate(t);
}

}  // namespace flatvessel

#endif  // FLATVESSEL_FLAT_DISCRETIZATION_HPP
