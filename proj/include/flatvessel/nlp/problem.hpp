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

#ifndef FLATVESSEL_NLP_PROBLEM_HPP
#define FLATVESSEL_NLP_PROBLEM_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace flatvessel::nlp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Dense NLP
///   min f(x)  s.t.  c_eq(x) = 0,  c_ineq(x) <= 0,  lower <= x <= upper.
/// Only the value callbacks are mandatory. Missing gradients are replaced by
/// forward differences; a missing Hessian by damped BFGS.
struct NlpProblem {
  int n = 0;
  int m_eq = 0;
  int m_ineq = 0;
  VectorXd lower;  // may hold -inf
  VectorXd upper;  // may hold +inf

  std::function<double(const VectorXd&)> cost;
  std::function<VectorXd(const VectorXd&)> eq;
  std::function<VectorXd(const VectorXd&)> ineq;

  std::function<VectorXd(const VectorXd&)> cost_gradient;
  std::function<MatrixXd(const VectorXd&)> eq_jacobian;
  std::function<MatrixXd(const VectorXd&)> ineq_jacobian;
  /// Hessian of f + y_eq^T c_eq + y_ineq^T c_ineq. May be indefinite.
  std::function<MatrixXd(const VectorXd&, const VectorXd&, const VectorXd&)> lagrangian_hessian;
  /// Optional positive semidefinite model of the same, preferred away from
  /// a solution.
  std::function<MatrixXd(const VectorXd&, const VectorXd&, const VectorXd&)> convex_hessian_model;

  /// Human-readable origin of a constraint row, used in diagnostics.
  std::function<std::string(bool equality, int row)> describe_row;

  VectorXd lower_or_default() const {
    return lower.size() == n ? lower : VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  }
  VectorXd upper_or_default() const {
    return upper.size() == n ? upper : VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  }
  VectorXd eval_eq(const VectorXd& x) const { return m_eq > 0 ? eq(x) : VectorXd(0); }
  VectorXd eval_ineq(const VectorXd& x) const { return m_ineq > 0 ? ineq(x) : VectorXd(0); }
};

struct SolverSettings {
  double feasibility_tolerance = 1e-6;
  double optimality_tolerance = 1e-6;
  int max_iterations = 200;
  double fd_step = 1e-7;  // relative forward-difference step
  double time_limit = std::numeric_limits<double>::infinity();  // seconds
  bool verbose = false;
};

enum class SolverStatus { kOptimal, kFeasibleStalled, kInfeasible, kIterationLimit };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kOptimal:
      return "optimal";
    case SolverStatus::kFeasibleStalled:
      return "feasible-stalled";
    case SolverStatus::kInfeasible:
      return "infeasible";
    case SolverStatus::kIterationLimit:
      return "iteration-limit";
  }
  return "unknown";
}

struct SolverReport {
  SolverStatus status = SolverStatus::kIterationLimit;
  int iterations = 0;
  double final_cost = 0.0;
  double max_violation = 0.0;  // original constraint units
  double kkt_error = 0.0;
  double wall_time = 0.0;      // s
  std::string message;
  VectorXd y_eq;
  VectorXd y_ineq;

  bool converged() const { return status == SolverStatus::kOptimal; }
  bool feasible(double tol) const { return max_violation <= tol; }
};

/// Largest violation of equality, inequality and box constraints.
inline double max_violation(const NlpProblem& p, const VectorXd& x) {
  double v = 0.0;
  if (p.m_eq > 0) v = std::max(v, p.eq(x).cwiseAbs().maxCoeff());
  if (p.m_ineq > 0) v = std::max(v, p.ineq(x).maxCoeff());
  const VectorXd lo = p.lower_or_default();
  const VectorXd hi = p.upper_or_default();
  for (int j = 0; j < p.n; ++j) v = std::max({v, lo(j) - x(j), x(j) - hi(j)});
  return v;
}

inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                            double rel_step, double fx) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    g(j) = (f(xp) - fx) / h;
    xp(j) = x(j);
  }
  return g;
}

inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& c, const VectorXd& x,
                            double rel_step, const VectorXd& cx) {
  MatrixXd J(cx.size(), x.size());
  VectorXd xp = x;
  for (int j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + h;
    J.col(j) = (c(xp) - cx) / h;
    xp(j) = x(j);
  }
  return J;
}

}  // namespace flatvessel::nlp

#endif  // FLATVESSEL_NLP_PROBLEM_HPP
