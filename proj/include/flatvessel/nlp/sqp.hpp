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

#ifndef FLATVESSEL_NLP_SQP_HPP
#define FLATVESSEL_NLP_SQP_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flatvessel/errors.hpp"
#include "flatvessel/nlp/problem.hpp"
#include "flatvessel/nlp/qp.hpp"

namespace flatvessel::nlp {

struct SolveResult {
  VectorXd x;
  SolverReport report;
};

/// Line-search SQP on the exact l1 merit function. Subproblems are elastic
/// QPs (always feasible) whose penalty equals the merit penalty, so an
/// infeasible starting point is acceptable. Constraint rows and the cost are
/// scaled by their gradient size at the starting point; tolerances and the
/// reported violation refer to the original units.
class SqpSolver {
 public:
  explicit SqpSolver(SolverSettings settings = {}) : settings_(settings) {}

  SolveResult solve(const NlpProblem& p, const VectorXd& x_start) const;

 private:
  struct Point {
    VectorXd x;
    double f = 0.0;
    VectorXd ce, ci;  // original units
    VectorXd gf;
    MatrixXd Je, Ji;
  };

  SolverSettings settings_;
};

namespace detail {

inline bool all_finite(const VectorXd& v) { return v.allFinite(); }

inline std::string first_non_finite(const NlpProblem& p, const VectorXd& ce, const VectorXd& ci) {
  for (int r = 0; r < ce.size(); ++r) {
    if (!std::isfinite(ce(r))) {
      return p.describe_row ? p.describe_row(true, r) : "equality row " + std::to_string(r);
    }
  }
  for (int r = 0; r < ci.size(); ++r) {
    if (!std::isfinite(ci(r))) {
      return p.describe_row ? p.describe_row(false, r) : "inequality row " + std::to_string(r);
    }
  }
  return "cost";
}

}  // namespace detail

inline SolveResult SqpSolver::solve(const NlpProblem& p, const VectorXd& x_start) const {
  using Clock = std::chrono::steady_clock;
  const auto t_begin = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t_begin).count(); };

  if (x_start.size() != p.n) {
    throw ContractViolation("SqpSolver: initial guess has length " + std::to_string(x_start.size()) +
                            ", problem dimension is " + std::to_string(p.n));
  }
  const int n = p.n;
  const int me = p.m_eq;
  const int mi = p.m_ineq;
  const VectorXd lo = p.lower_or_default();
  const VectorXd hi = p.upper_or_default();

  SolveResult out;
  out.report.y_eq = VectorXd::Zero(me);
  out.report.y_ineq = VectorXd::Zero(mi);
  for (int j = 0; j < n; ++j) {
    if (lo(j) > hi(j)) {
      out.x = x_start;
      out.report.status = SolverStatus::kInfeasible;
      out.report.message = "empty variable box at index " + std::to_string(j);
      out.report.max_violation = lo(j) - hi(j);
      out.report.wall_time = elapsed();
      return out;
    }
  }

  auto eval_values = [&](Point& pt) {
    pt.f = p.cost(pt.x);
    pt.ce = p.eval_eq(pt.x);
    pt.ci = p.eval_ineq(pt.x);
    if (pt.ce.size() != me || pt.ci.size() != mi) {
      throw ContractViolation("SqpSolver: constraint callback returned a wrong dimension");
    }
    return std::isfinite(pt.f) && detail::all_finite(pt.ce) && detail::all_finite(pt.ci);
  };
  auto eval_derivatives = [&](Point& pt) {
    const double h = settings_.fd_step;
    pt.gf = p.cost_gradient ? p.cost_gradient(pt.x) : fd_gradient(p.cost, pt.x, h, pt.f);
    if (me > 0) {
      pt.Je = p.eq_jacobian ? p.eq_jacobian(pt.x) : fd_jacobian(p.eq, pt.x, h, pt.ce);
    } else {
      pt.Je.resize(0, n);
    }
    if (mi > 0) {
      pt.Ji = p.ineq_jacobian ? p.ineq_jacobian(pt.x) : fd_jacobian(p.ineq, pt.x, h, pt.ci);
    } else {
      pt.Ji.resize(0, n);
    }
  };

  Point cur;
  cur.x = x_start.cwiseMax(lo).cwiseMin(hi);
  if (!eval_values(cur)) {
    throw SolverError("SqpSolver: non-finite value at the initial guess (" +
                      detail::first_non_finite(p, cur.ce, cur.ci) + ")");
  }
  eval_derivatives(cur);

  // Gradient-based scaling, frozen at the starting point.
  auto row_scale = [](const MatrixXd& J) {
    VectorXd s(J.rows());
    for (int r = 0; r < J.rows(); ++r) {
      const double g = J.row(r).lpNorm<Eigen::Infinity>();
      s(r) = g > 100.0 ? 100.0 / g : 1.0;
    }
    return s;
  };
  const double gmax = cur.gf.lpNorm<Eigen::Infinity>();
  const double sf = gmax > 100.0 ? 100.0 / gmax : 1.0;
  const VectorXd se = row_scale(cur.Je);
  const VectorXd si = row_scale(cur.Ji);

  std::vector<int> box_lo, box_hi;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(lo(j))) box_lo.push_back(j);
    if (std::isfinite(hi(j))) box_hi.push_back(j);
  }
  const int mb = static_cast<int>(box_lo.size() + box_hi.size());

  auto violation_l1 = [&](const Point& pt) {
    double v = 0.0;
    for (int r = 0; r < me; ++r) v += std::abs(se(r) * pt.ce(r));
    for (int r = 0; r < mi; ++r) v += std::max(0.0, si(r) * pt.ci(r));
    return v;
  };
  auto violation_max = [&](const Point& pt) {
    double v = 0.0;
    if (me > 0) v = std::max(v, pt.ce.cwiseAbs().maxCoeff());
    if (mi > 0) v = std::max(v, pt.ci.maxCoeff());
    for (int j = 0; j < n; ++j) v = std::max({v, lo(j) - pt.x(j), pt.x(j) - hi(j)});
    return v;
  };

  VectorXd ye = VectorXd::Zero(me);  // scaled-problem multipliers
  VectorXd yi = VectorXd::Zero(mi);
  VectorXd yb = VectorXd::Zero(mb);

  auto lagrangian_gradient = [&](const Point& pt) {
    VectorXd gl = sf * pt.gf;
    if (me > 0) gl += pt.Je.transpose() * (se.cwiseProduct(ye));
    if (mi > 0) gl += pt.Ji.transpose() * (si.cwiseProduct(yi));
    int r = 0;
    for (int j : box_lo) gl(j) -= yb(r++);
    for (int j : box_hi) gl(j) += yb(r++);
    return gl;
  };

  MatrixXd B = MatrixXd::Identity(n, n);
  // The convex model drives the early iterations; the exact Hessian takes
  // over once the iterate is nearly feasible and nearly stationary.
  bool exact_phase = !p.convex_hessian_model;
  int exact_hold = 0;  // iterations before the exact Hessian may be retried
  auto hessian = [&](const Point& pt) -> MatrixXd {
    if (!p.lagrangian_hessian) return B;
    const VectorXd ye_orig = se.cwiseProduct(ye) / sf;
    const VectorXd yi_orig = si.cwiseProduct(yi) / sf;
    const auto& provider = exact_phase ? p.lagrangian_hessian : p.convex_hessian_model;
    return sf * provider(pt.x, ye_orig, yi_orig);
  };

  double nu = 10.0;
  // Relative proximal weight, raised when steps are cut back by the line
  // search and relaxed after full steps.
  double prox = 0.0;
  const double nu_max = 1e9;
  const double feas_tol = settings_.feasibility_tolerance;
  const double opt_tol = settings_.optimality_tolerance;

  Point best = cur;
  double best_viol = violation_max(cur);
  auto consider_best = [&](const Point& pt) {
    const double v = violation_max(pt);
    const bool pt_ok = v <= feas_tol;
    const bool best_ok = best_viol <= feas_tol;
    if ((pt_ok && (!best_ok || pt.f <= best.f)) || (!pt_ok && !best_ok && v < best_viol)) {
      best = pt;
      best_viol = v;
    }
  };

  SolverStatus status = SolverStatus::kIterationLimit;
  std::string message;
  double kkt = std::numeric_limits<double>::infinity();
  int iter = 0;
  int stagnant = 0;  // consecutive accepted steps without measurable progress

  QpProblem qp_base;
  qp_base.A.resize(me, n);
  qp_base.b.resize(me);
  qp_base.rho_eq.resize(me);
  qp_base.G.resize(mi + mb, n);
  qp_base.h.resize(mi + mb);
  qp_base.rho_ineq.resize(mi + mb);
  // Linearization at `pt` with constant parts `ce_const`, `ci_const`.
  auto assemble_rows = [&](const Point& pt, const VectorXd& ce_const, const VectorXd& ci_const) {
    for (int k = 0; k < me; ++k) {
      qp_base.A.row(k) = se(k) * pt.Je.row(k);
      qp_base.b(k) = -se(k) * ce_const(k);
      qp_base.rho_eq(k) = nu;
    }
    int r = 0;
    for (int k = 0; k < mi; ++k, ++r) {
      qp_base.G.row(r) = si(k) * pt.Ji.row(k);
      qp_base.h(r) = -si(k) * ci_const(k);
      qp_base.rho_ineq(r) = nu;
    }
    for (int j : box_lo) {
      qp_base.G.row(r).setZero();
      qp_base.G(r, j) = -1.0;
      qp_base.h(r) = pt.x(j) - lo(j);
      qp_base.rho_ineq(r++) = std::numeric_limits<double>::infinity();
    }
    for (int j : box_hi) {
      qp_base.G.row(r).setZero();
      qp_base.G(r, j) = 1.0;
      qp_base.h(r) = hi(j) - pt.x(j);
      qp_base.rho_ineq(r++) = std::numeric_limits<double>::infinity();
    }
  };

  for (iter = 0; iter < settings_.max_iterations; ++iter) {
    if (elapsed() > settings_.time_limit) {
      message = "time limit reached";
      break;
    }
    const double viol = violation_max(cur);
    const VectorXd gl = lagrangian_gradient(cur);
    double comp = 0.0;
    for (int r = 0; r < mi; ++r) comp = std::max(comp, std::abs(yi(r) * si(r) * cur.ci(r)));
    const double gscale = std::max(1.0, (sf * cur.gf).lpNorm<Eigen::Infinity>());
    kkt = std::max(gl.lpNorm<Eigen::Infinity>(), comp) / gscale;
    if (settings_.verbose) {
      std::fprintf(stderr, "sqp %4d  f=% .8e  viol=%.3e  kkt=%.3e  nu=%.1e\n", iter, cur.f, viol,
                   kkt, nu);
    }
    if (iter > 0 && viol <= feas_tol && kkt <= opt_tol) {
      status = SolverStatus::kOptimal;
      break;
    }

    if (exact_hold > 0) --exact_hold;
    if (!exact_phase && exact_hold == 0 && viol <= 10.0 * feas_tol && kkt <= 1e-3) exact_phase = true;
    MatrixXd H = hessian(cur);
    H = 0.5 * (H + H.transpose());
    const double dmax = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    H.diagonal().array() += (1e-8 + prox) * dmax;
    assemble_rows(cur, cur.ce, cur.ci);

    // Convexification. An indefinite exact Hessian is first augmented with
    // sigma * C^T C over the rows active in the last subproblem, which leaves
    // the subproblem unchanged on that active set; a diagonal shift is the
    // fallback.
    std::vector<int> act_eq, act_in;
    double sigma = 0.0;
    Eigen::LLT<MatrixXd> chol(H);
    if (chol.info() != Eigen::Success && exact_phase) {
      for (int r = 0; r < me; ++r) {
        if (std::abs(ye(r)) < nu * (1.0 - 1e-9)) act_eq.push_back(r);
      }
      for (int r = 0; r < mi; ++r) {
        if (yi(r) > 0.0 && yi(r) < nu * (1.0 - 1e-9)) act_in.push_back(r);
      }
      for (int r = 0; r < mb; ++r) {
        if (yb(r) > 0.0) act_in.push_back(mi + r);
      }
      if (!act_eq.empty() || !act_in.empty()) {
        MatrixXd CtC = MatrixXd::Zero(n, n);
        for (int r : act_eq) CtC.selfadjointView<Eigen::Lower>().rankUpdate(qp_base.A.row(r).transpose());
        for (int r : act_in) CtC.selfadjointView<Eigen::Lower>().rankUpdate(qp_base.G.row(r).transpose());
        CtC.triangularView<Eigen::StrictlyUpper>() = CtC.transpose();
        const double cmax = std::max(1e-300, CtC.diagonal().maxCoeff());
        for (double s = 1e-3 * dmax / cmax; s <= 1e8 * dmax / cmax; s *= 10.0) {
          chol.compute(H + s * CtC);
          if (chol.info() == Eigen::Success) {
            sigma = s;
            H += s * CtC;
            break;
          }
        }
      }
    }
    for (double shift = 1e-6 * dmax; chol.info() != Eigen::Success; shift *= 10.0) {
      sigma = 0.0;
      H.diagonal().array() += shift;
      chol.compute(H);
    }
    // Gradient of the subproblem for the current row constants.
    auto set_qp_gradient = [&](const VectorXd& g) {
      qp_base.g = g;
      if (sigma == 0.0) return;
      for (int r : act_eq) qp_base.g -= sigma * qp_base.b(r) * qp_base.A.row(r).transpose();
      for (int r : act_in) qp_base.g -= sigma * qp_base.h(r) * qp_base.G.row(r).transpose();
    };

    const double V0 = violation_l1(cur);
    const VectorXd gs = sf * cur.gf;
    auto linear_violation = [&](const QpResult& q) {
      double v = 0.0;
      if (me) v += (qp_base.A * q.d - qp_base.b).cwiseAbs().sum();
      if (mi) {
        v += (qp_base.G.topRows(mi) * q.d - qp_base.h.head(mi)).cwiseMax(0.0).sum();
      }
      return v;
    };
    qp_base.H = H;
    set_qp_gradient(gs);
    QpResult qp = solve_elastic_qp(qp_base);
    double lin_viol = linear_violation(qp);
    const double lin_tol = 1e-3 * V0 + 1e-10 * (me + mi);
    if (lin_viol > lin_tol && nu < nu_max) {
      // Steering: compare against the best linearized violation reachable
      // from here, found by a QP that all but ignores the cost.
      QpProblem feas = qp_base;
      feas.H = 1e-8 * H + 1e-10 * MatrixXd::Identity(n, n);
      feas.g = 1e-8 * qp_base.g;
      feas.rho_eq.setOnes();
      for (int r = 0; r < mi; ++r) feas.rho_ineq(r) = 1.0;
      const double lin_best = linear_violation(solve_elastic_qp(feas));
      for (int attempt = 0; attempt < 8 && nu < nu_max; ++attempt) {
        const double share = lin_best <= lin_tol ? 0.9 : 0.1;
        const bool enough = lin_viol <= lin_tol || V0 - lin_viol >= share * (V0 - lin_best);
        if (enough) break;
        const double nu_try = std::min(nu_max, 10.0 * nu);
        qp_base.rho_eq.setConstant(nu_try);
        for (int r = 0; r < mi; ++r) qp_base.rho_ineq(r) = nu_try;
        QpResult qp_try = solve_elastic_qp(qp_base);
        const double lin_try = linear_violation(qp_try);
        if (lin_try > 0.5 * lin_viol) {
          // The larger penalty buys nothing beyond subproblem accuracy.
          qp_base.rho_eq.setConstant(nu);
          for (int r = 0; r < mi; ++r) qp_base.rho_ineq(r) = nu;
          break;
        }
        nu = nu_try;
        qp = std::move(qp_try);
        lin_viol = lin_try;
      }
    }
    const VectorXd& d = qp.d;
    if (settings_.verbose) {
      std::fprintf(stderr, "     qp its=%d conv=%d lin_viol=%.3e V0=%.3e |d|=%.3e t=%.2f\n", qp.iterations,
                   qp.converged ? 1 : 0, lin_viol, V0, d.lpNorm<Eigen::Infinity>(), elapsed());
    }

    // Multiplier estimates for the next iterate.
    VectorXd ye_new = qp.y_eq;
    VectorXd yi_new = qp.y_ineq.head(mi);
    VectorXd yb_new = qp.y_ineq.tail(mb);

    if (viol <= feas_tol) {
      // Stationarity at the current point with the fresh multipliers.
      std::swap(ye, ye_new);
      std::swap(yi, yi_new);
      std::swap(yb, yb_new);
      double comp_new = 0.0;
      for (int r = 0; r < mi; ++r) comp_new = std::max(comp_new, std::abs(yi(r) * si(r) * cur.ci(r)));
      const double kkt_new =
          std::max(lagrangian_gradient(cur).lpNorm<Eigen::Infinity>(), comp_new) / gscale;
      std::swap(ye, ye_new);
      std::swap(yi, yi_new);
      std::swap(yb, yb_new);
      if (kkt_new <= opt_tol) {
        ye = ye_new;
        yi = yi_new;
        yb = yb_new;
        kkt = kkt_new;
        status = SolverStatus::kOptimal;
        break;
      }
    }

    const double gd = qp_base.g.dot(d);  // includes the curvature augmentation
    const double dHd = d.dot(H * d);
    const double pred = -(gd + 0.5 * dHd) + nu * (V0 - lin_viol);
    const double phi0 = sf * cur.f + nu * V0;

    if (d.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + cur.x.lpNorm<Eigen::Infinity>()) ||
        pred <= 1e-15 * (1.0 + std::abs(phi0))) {
      if (exact_phase && p.convex_hessian_model && pred <= 0.0) {
        exact_phase = false;
        exact_hold = 5;
        continue;
      }
      ye = ye_new;
      yi = yi_new;
      yb = yb_new;
      if (viol <= feas_tol) {
        const VectorXd gl2 = lagrangian_gradient(cur);
        kkt = gl2.lpNorm<Eigen::Infinity>() / gscale;
        status = kkt <= opt_tol ? SolverStatus::kOptimal : SolverStatus::kFeasibleStalled;
      } else {
        status = SolverStatus::kInfeasible;
      }
      message = "step below resolution";
      break;
    }

    Point trial;
    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 40 && !accepted; ++ls) {
      trial.x = cur.x + alpha * d;
      const bool finite = eval_values(trial);
      if (finite) {
        const double phi = sf * trial.f + nu * violation_l1(trial);
        if (phi <= phi0 - 1e-4 * alpha * pred) {
          accepted = true;
          break;
        }
        if (ls == 0) {
          // Second-order correction against the Maratos effect.
          VectorXd ce_soc = trial.ce - (me > 0 ? VectorXd(cur.Je * d) : VectorXd(0));
          VectorXd ci_soc = trial.ci - (mi > 0 ? VectorXd(cur.Ji * d) : VectorXd(0));
          assemble_rows(cur, ce_soc, ci_soc);
          set_qp_gradient(gs);
          const QpResult soc = solve_elastic_qp(qp_base);
          Point corr;
          corr.x = cur.x + soc.d;
          if (eval_values(corr)) {
            const double phic = sf * corr.f + nu * violation_l1(corr);
            if (phic <= phi0 - 1e-4 * pred) {
              trial = std::move(corr);
              accepted = true;
              break;
            }
          }
        }
      }
      alpha *= 0.5;
      if (alpha < 1e-10) break;
    }

    if (!accepted && exact_phase && p.convex_hessian_model) {
      exact_phase = false;
      exact_hold = 5;
      continue;
    }
    if (!accepted && prox < 1.0) {
      prox = std::min(1.0, std::max(1e-4, 100.0 * prox));
      continue;
    }
    if (!accepted) {
      ye = ye_new;
      yi = yi_new;
      yb = yb_new;
      if (viol > feas_tol && nu < nu_max) {
        nu = std::min(nu_max, 10.0 * nu);
        continue;
      }
      status = viol <= feas_tol ? SolverStatus::kFeasibleStalled : SolverStatus::kInfeasible;
      message = "line search failed";
      break;
    }

    eval_derivatives(trial);
    const VectorXd old_grad_lag = [&] {
      ye = ye_new;
      yi = yi_new;
      yb = yb_new;
      return lagrangian_gradient(cur);
    }();
    if (!p.lagrangian_hessian) {
      // Damped BFGS update of the Lagrangian Hessian model.
      const VectorXd s = trial.x - cur.x;
      const VectorXd yv = lagrangian_gradient(trial) - old_grad_lag;
      const VectorXd Bs = B * s;
      const double sBs = s.dot(Bs);
      const double sy = s.dot(yv);
      if (sBs > 1e-300) {
        const double theta = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
        const VectorXd r = theta * yv + (1.0 - theta) * Bs;
        const double sr = s.dot(r);
        if (sr > 1e-300) B += r * r.transpose() / sr - Bs * Bs.transpose() / sBs;
      }
    }
    const bool tiny = (trial.x - cur.x).lpNorm<Eigen::Infinity>() <=
                          1e-8 * (1.0 + cur.x.lpNorm<Eigen::Infinity>()) &&
                      std::abs(trial.f - cur.f) <= 1e-12 * (1.0 + std::abs(cur.f));
    stagnant = tiny ? stagnant + 1 : 0;
    cur = std::move(trial);
    consider_best(cur);
    if (stagnant >= 5) {
      const double v = violation_max(cur);
      if (v <= feas_tol) {
        kkt = lagrangian_gradient(cur).lpNorm<Eigen::Infinity>() / gscale;
        status = kkt <= opt_tol ? SolverStatus::kOptimal : SolverStatus::kFeasibleStalled;
      } else {
        status = SolverStatus::kInfeasible;
      }
      message = "no progress over consecutive steps";
      ++iter;
      break;
    }
    if (alpha >= 1.0) {
      prox = prox > 1e-9 ? 0.25 * prox : 0.0;
    } else if (alpha < 0.2) {
      prox = std::min(1.0, std::max(1e-6, 10.0 * prox));
    }
  }

  if (status == SolverStatus::kIterationLimit && message.empty()) message = "iteration limit reached";
  const Point& fin = (status == SolverStatus::kOptimal) ? cur : best;
  out.x = fin.x;
  out.report.status = status;
  out.report.iterations = iter;
  out.report.final_cost = fin.f;
  out.report.max_violation = violation_max(fin);
  out.report.kkt_error = kkt;
  out.report.message = message;
  out.report.y_eq = se.cwiseProduct(ye) / sf;
  out.report.y_ineq = si.cwiseProduct(yi) / sf;
  out.report.wall_time = elapsed();
  if (status == SolverStatus::kIterationLimit && out.report.max_violation > feas_tol &&
      nu >= nu_max) {
    out.report.status = SolverStatus::kInfeasible;
  }
  return out;
}

inline SolveResult solve(const NlpProblem& p, const VectorXd& x0, const SolverSettings& s = {}) {
  return SqpSolver(s).solve(p, x0);
}

}  // namespace flatvessel::nlp

#endif  // FLATVESSEL_NLP_SQP_HPP
