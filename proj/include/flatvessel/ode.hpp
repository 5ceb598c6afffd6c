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

#ifndef FLATVESSEL_ODE_HPP
#define FLATVESSEL_ODE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flatvessel/errors.hpp"

namespace flatvessel {

struct OdeTolerances {
  double rtol = 1e-8;
  double atol = 1e-10;
  double initial_step = 0.0;  // 0 selects a step from the local derivative scale
  long max_steps = 5'000'000;
};

template <int N>
struct DenseRun {
  std::vector<double> times;
  std::vector<Eigen::Matrix<double, N, 1>> states;
  Eigen::Matrix<double, N, 1> final_state;
  long accepted_steps = 0;
  long rejected_steps = 0;
};

namespace detail {

// Dormand-Prince 5(4) tableau and Hairer's continuous extension.
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

}  // namespace detail

/// Adaptive Dormand-Prince integration of y' = f(t, y) on [t0, t1] with
/// dense output at `output_times`. Breakpoints split the interval so that the
/// right-hand side may be non-smooth there.
template <int N, typename Rhs>
DenseRun<N> integrate_dense(const Rhs& f, const Eigen::Matrix<double, N, 1>& y0, double t0,
                            double t1, const OdeTolerances& tol,
                            std::vector<double> output_times = {},
                            std::vector<double> breakpoints = {}) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using D = detail::Dopri5;
  DenseRun<N> run;

  std::sort(output_times.begin(), output_times.end());
  std::vector<double> stops;
  for (double b : breakpoints) {
    if (b > t0 && b < t1) stops.push_back(b);
  }
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());
  stops.push_back(t1);

  std::size_t next_out = 0;
  while (next_out < output_times.size() && output_times[next_out] < t0) ++next_out;
  auto emit = [&](double t, const Vec& y) {
    run.times.push_back(t);
    run.states.push_back(y);
  };
  while (next_out < output_times.size() && output_times[next_out] == t0) {
    emit(t0, y0);
    ++next_out;
  }

  Vec y = y0;
  double t = t0;
  double h = tol.initial_step;
  Vec k1 = f(t, y);
  long steps = 0;

  for (double stop : stops) {
    if (h <= 0.0) {
      const double scale = (tol.atol + tol.rtol * y.cwiseAbs().array()).matrix().norm();
      const double dnorm = k1.norm();
      h = dnorm > 0 ? 0.01 * scale / dnorm : 1e-3;
      h = std::clamp(h, 1e-6, 0.1 * (stop - t));
    }
    while (t < stop) {
      if (++steps > tol.max_steps) {
        throw IntegrationError(t, "integrate_dense: step budget exhausted at t=" + std::to_string(t));
      }
      bool last = false;
      if (t + h >= stop || stop - (t + h) < 1e-12 * std::max(1.0, std::abs(stop))) {
        h = stop - t;
        last = true;
      }
      const double min_h = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
      if (h < min_h) {
        throw IntegrationError(t, "integrate_dense: step size underflow at t=" + std::to_string(t));
      }
      const Vec k2 = f(t + D::c2 * h, y + h * (D::a21 * k1));
      const Vec k3 = f(t + D::c3 * h, y + h * (D::a31 * k1 + D::a32 * k2));
      const Vec k4 = f(t + D::c4 * h, y + h * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3));
      const Vec k5 =
          f(t + D::c5 * h, y + h * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4));
      const Vec k6 = f(t + h, y + h * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 +
                                       D::a65 * k5));
      const Vec ynew =
          y + h * (D::a71 * k1 + D::a73 * k3 + D::a74 * k4 + D::a75 * k5 + D::a76 * k6);
      const Vec k7 = f(t + h, ynew);
      const Vec err =
          h * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);
      const Vec sc = (tol.atol + tol.rtol * y.cwiseAbs().cwiseMax(ynew.cwiseAbs()).array()).matrix();
      const double enorm = std::sqrt((err.cwiseQuotient(sc)).squaredNorm() / double(y.size()));
      if (!std::isfinite(enorm)) {
        if (!ynew.allFinite() && h <= min_h * 2) {
          throw IntegrationError(t, "integrate_dense: non-finite state at t=" + std::to_string(t));
        }
        h *= 0.1;
        ++run.rejected_steps;
        continue;
      }
      if (enorm <= 1.0) {
        const double tnew = last ? stop : t + h;
        // Dense output on (t, tnew].
        if (next_out < output_times.size() && output_times[next_out] <= tnew) {
          const Vec r2 = ynew - y;
          const Vec r3 = h * k1 - r2;
          const Vec r4 = r2 - h * k7 - r3;
          const Vec r5 = h * (D::d1 * k1 + D::d3 * k3 + D::d4 * k4 + D::d5 * k5 + D::d6 * k6 +
                              D::d7 * k7);
          while (next_out < output_times.size() && output_times[next_out] <= tnew) {
            const double to = output_times[next_out];
            if (to == tnew) {
              emit(to, ynew);
            } else {
              const double th = (to - t) / h;
              const double th1 = 1.0 - th;
              emit(to, y + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))));
            }
            ++next_out;
          }
        }
        y = ynew;
        t = tnew;
        k1 = k7;
        ++run.accepted_steps;
        const double fac = enorm > 0 ? 0.9 * std::pow(enorm, -0.2) : 5.0;
        h *= std::clamp(fac, 0.2, 5.0);
      } else {
        ++run.rejected_steps;
        h *= std::clamp(0.9 * std::pow(enorm, -0.2), 0.1, 0.9);
      }
    }
    // The right-hand side may jump at a breakpoint.
    k1 = f(t, y);
  }
  run.final_state = y;
  return run;
}

}  // namespace flatvessel

#endif  // FLATVESSEL_ODE_HPP
