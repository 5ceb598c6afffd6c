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

#ifndef FLATVESSEL_NLP_QP_HPP
#define FLATVESSEL_NLP_QP_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace flatvessel::nlp {

struct QpSettings {
  double tolerance = 1e-10;  // relative
  int max_iterations = 80;
  double augment_threshold = 1e-2;
  double regularization = 1e-12;
  int refinement_steps = 2;
  bool polish = true;
};

/// Convex QP with elastic rows
///   min 1/2 d^T H d + g^T d + sum rho_e |A d - b| + sum rho_i max(0, G d - h)
/// Equality rows are always elastic; inequality rows with rho_i = +inf are
/// hard. H must be positive definite.
struct QpProblem {
  MatrixXd H;
  VectorXd g;
  MatrixXd A;
  VectorXd b;
  VectorXd rho_eq;
  MatrixXd G;
  VectorXd h;
  VectorXd rho_ineq;
};

struct QpResult {
  VectorXd d;
  VectorXd y_eq;       // |y_eq| <= rho_eq
  VectorXd y_ineq;     // 0 <= y_ineq <= rho_ineq
  VectorXd eq_gap;     // |A d - b| carried by the elastic variables
  VectorXd ineq_gap;   // elastic relaxation of each inequality row
  int iterations = 0;
  bool converged = false;

  /// Total linearized violation accepted by the elastic variables.
  double elastic_total() const { return eq_gap.sum() + ineq_gap.sum(); }
};

namespace detail {

/// Re-solves the QP on the active set suggested by the interior-point
/// iterate, correcting the set for a few passes. Succeeds only if the result
/// is primal and dual consistent.
inline bool polish_active_set(const QpProblem& qp, QpResult& res, double tol, int passes = 6) {
  const int n = static_cast<int>(qp.g.size());
  const int me = static_cast<int>(qp.b.size());
  const int mi = static_cast<int>(qp.h.size());
  enum Role { kFree, kActive, kUpper, kLower };
  std::vector<Role> eq_role(static_cast<std::size_t>(me)), in_role(static_cast<std::size_t>(mi));
  for (int r = 0; r < me; ++r) {
    const double lam = res.y_eq(r);
    const bool saturated = res.eq_gap(r) > qp.rho_eq(r) - std::abs(lam);
    eq_role[static_cast<std::size_t>(r)] = !saturated ? kActive : (lam > 0 ? kUpper : kLower);
  }
  const VectorXd slack0 = qp.h - qp.G * res.d + res.ineq_gap;
  for (int r = 0; r < mi; ++r) {
    const double y = res.y_ineq(r);
    const double rho = qp.rho_ineq(r);
    if (std::isfinite(rho) && res.ineq_gap(r) > rho - y) {
      in_role[static_cast<std::size_t>(r)] = kUpper;
    } else {
      in_role[static_cast<std::size_t>(r)] = slack0(r) < y ? kActive : kFree;
    }
  }
  Eigen::LLT<MatrixXd> hf(qp.H);
  if (hf.info() != Eigen::Success) return false;
  const MatrixXd HiAt = me ? MatrixXd(hf.solve(qp.A.transpose())) : MatrixXd(n, 0);
  const MatrixXd HiGt = mi ? MatrixXd(hf.solve(qp.G.transpose())) : MatrixXd(n, 0);
  const VectorXd Hig = hf.solve(qp.g);
  double scale = 1.0;
  if (me) scale = std::max(scale, 1.0 + qp.b.cwiseAbs().maxCoeff());
  if (mi) scale = std::max(scale, 1.0 + qp.h.cwiseAbs().maxCoeff());

  for (int pass = 0; pass < passes; ++pass) {
    // Stationarity: H d + g + sum(fixed multipliers) + C^T m = 0, C d = c.
    std::vector<int> rows;  // encoded: r for equality rows, me + r for inequality rows
    VectorXd d0 = -Hig;
    for (int r = 0; r < me; ++r) {
      const Role role = eq_role[static_cast<std::size_t>(r)];
      if (role == kActive) rows.push_back(r);
      if (role == kUpper) d0 -= qp.rho_eq(r) * HiAt.col(r);
      if (role == kLower) d0 += qp.rho_eq(r) * HiAt.col(r);
    }
    for (int r = 0; r < mi; ++r) {
      const Role role = in_role[static_cast<std::size_t>(r)];
      if (role == kActive) rows.push_back(me + r);
      if (role == kUpper) d0 -= qp.rho_ineq(r) * HiGt.col(r);
    }
    const int na = static_cast<int>(rows.size());
    MatrixXd C(na, n), HiCt(n, na);
    VectorXd c(na);
    for (int k = 0; k < na; ++k) {
      const int r = rows[static_cast<std::size_t>(k)];
      if (r < me) {
        C.row(k) = qp.A.row(r);
        HiCt.col(k) = HiAt.col(r);
        c(k) = qp.b(r);
      } else {
        C.row(k) = qp.G.row(r - me);
        HiCt.col(k) = HiGt.col(r - me);
        c(k) = qp.h(r - me);
      }
    }
    VectorXd m(na);
    if (na > 0) {
      MatrixXd S = C * HiCt;
      S.diagonal().array() += 1e-13 * (1.0 + S.diagonal().cwiseAbs().maxCoeff());
      Eigen::LDLT<MatrixXd> sf(S);
      if (sf.info() != Eigen::Success) return false;
      m = sf.solve(C * d0 - c);
    }
    const VectorXd d = na ? VectorXd(d0 - HiCt * m) : d0;
    if (!d.allFinite() || !m.allFinite()) return false;
    // Dependent active rows with incompatible right-hand sides.
    if (na > 0 && (C * d - c).lpNorm<Eigen::Infinity>() > tol * scale) return false;

    bool consistent = true;
    VectorXd y_eq(me), y_in(mi), eq_gap(me), in_gap(mi);
    for (int r = 0; r < me; ++r) {
      y_eq(r) = eq_role[static_cast<std::size_t>(r)] == kUpper ? qp.rho_eq(r) : -qp.rho_eq(r);
    }
    for (int r = 0; r < mi; ++r) {
      y_in(r) = in_role[static_cast<std::size_t>(r)] == kUpper ? qp.rho_ineq(r) : 0.0;
    }
    for (int k = 0; k < na; ++k) {
      const int r = rows[static_cast<std::size_t>(k)];
      if (r < me) {
        const double rho = qp.rho_eq(r);
        y_eq(r) = m(k);
        if (std::abs(m(k)) > rho * (1.0 + tol)) {
          eq_role[static_cast<std::size_t>(r)] = m(k) > 0 ? kUpper : kLower;
          consistent = false;
        }
      } else {
        const double rho = qp.rho_ineq(r - me);
        y_in(r - me) = std::max(0.0, m(k));
        if (m(k) < -tol * (1.0 + std::abs(m(k)))) {
          in_role[static_cast<std::size_t>(r - me)] = kFree;
          consistent = false;
        } else if (std::isfinite(rho) && m(k) > rho * (1.0 + tol)) {
          in_role[static_cast<std::size_t>(r - me)] = kUpper;
          consistent = false;
        }
      }
    }
    for (int r = 0; r < me; ++r) {
      const double v = qp.A.row(r).dot(d) - qp.b(r);
      const Role role = eq_role[static_cast<std::size_t>(r)];
      if ((role == kUpper && v < -tol * scale) || (role == kLower && v > tol * scale)) {
        eq_role[static_cast<std::size_t>(r)] = kActive;
        consistent = false;
      }
      eq_gap(r) = std::abs(v);
    }
    for (int r = 0; r < mi; ++r) {
      const double v = qp.G.row(r).dot(d) - qp.h(r);
      const Role role = in_role[static_cast<std::size_t>(r)];
      if ((role == kFree && v > tol * scale) || (role == kUpper && v < -tol * scale)) {
        in_role[static_cast<std::size_t>(r)] = kActive;
        consistent = false;
      }
      in_gap(r) = std::isfinite(qp.rho_ineq(r)) ? std::max(0.0, v) : 0.0;
    }
    if (consistent) {
      res.d = d;
      res.y_eq = y_eq;
      res.y_ineq = y_in;
      res.eq_gap = eq_gap;
      res.ineq_gap = in_gap;
      res.converged = true;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Mehrotra predictor-corrector interior-point method. Every row r of the
/// stacked system M = [A; G] carries a diagonal weight D_r after the slack
/// updates are eliminated, leaving
///   H dd + M^T dz = -r_d,   M dd - D dz = rhs.
/// Rows with large D_r are eliminated into the primal block; the rest are
/// kept in a quasi-definite augmented matrix.
inline QpResult solve_elastic_qp(const QpProblem& qp, const QpSettings& settings = {}) {
  const int n = static_cast<int>(qp.g.size());
  const int me = static_cast<int>(qp.b.size());
  const int mi = static_cast<int>(qp.h.size());
  using Arr = Eigen::ArrayXd;

  Eigen::Array<bool, Eigen::Dynamic, 1> elastic(mi);
  for (int r = 0; r < mi; ++r) elastic(r) = std::isfinite(qp.rho_ineq(r));
  const Arr rho_e = qp.rho_eq.array();
  const Arr rho_i = elastic.select(qp.rho_ineq.array(), Arr::Zero(mi));

  VectorXd d = VectorXd::Zero(n);
  Arr lam = Arr::Zero(me);
  Arr p = Arr::Ones(me), q = Arr::Ones(me);  // positive / negative parts of A d - b
  Arr w(mi), y(mi), t(mi);
  for (int r = 0; r < mi; ++r) {
    w(r) = std::max(1.0, std::abs(qp.h(r)));
    if (elastic(r)) {
      t(r) = 1.0;
      y(r) = std::min(1.0, 0.5 * rho_i(r));
    } else {
      t(r) = 0.0;
      y(r) = 1.0;
    }
  }
  for (int r = 0; r < me; ++r) {
    const double br = qp.b(r);
    p(r) = 1.0 + std::max(0.0, -br);
    q(r) = 1.0 + std::max(0.0, br);
  }

  const int n_pairs = 2 * me + mi + static_cast<int>(elastic.count());
  auto gap = [&](const Arr& pp, const Arr& qq, const Arr& ll, const Arr& ww, const Arr& yy,
                 const Arr& tt) {
    if (n_pairs == 0) return 0.0;
    double s = (pp * (rho_e - ll)).sum() + (qq * (rho_e + ll)).sum() + (ww * yy).sum();
    for (int r = 0; r < mi; ++r) {
      if (elastic(r)) s += tt(r) * (rho_i(r) - yy(r));
    }
    return s / n_pairs;
  };

  const double gscale = 1.0 + (n ? qp.g.cwiseAbs().maxCoeff() : 0.0);
  double pscale = 1.0;
  if (me) pscale = std::max(pscale, 1.0 + qp.b.cwiseAbs().maxCoeff());
  if (mi) pscale = std::max(pscale, 1.0 + qp.h.cwiseAbs().maxCoeff());

  QpResult res;
  VectorXd best_d = d;
  Arr best_lam = lam, best_p = p, best_q = q, best_y = y, best_t = t;
  double best_err = std::numeric_limits<double>::infinity();

  const int m = me + mi;
  MatrixXd M(m, n);
  if (me) M.topRows(me) = qp.A;
  if (mi) M.bottomRows(mi) = qp.G;
  Eigen::LDLT<MatrixXd> ldlt;
  for (int it = 0; it < settings.max_iterations; ++it) {
    res.iterations = it + 1;
    const Arr zp = rho_e - lam, zq = rho_e + lam;
    const Arr zt = elastic.select(rho_i - y, Arr::Ones(mi));
    VectorXd rd = qp.H * d + qp.g;
    if (me) rd.noalias() += qp.A.transpose() * lam.matrix();
    if (mi) rd.noalias() += qp.G.transpose() * y.matrix();
    const Arr re = me ? Arr((qp.A * d).array() - p + q - qp.b.array()) : Arr(0);
    const Arr ri = mi ? Arr((qp.G * d).array() - t + w - qp.h.array()) : Arr(0);
    const double mu = gap(p, q, lam, w, y, t);
    double prim = 0.0;
    if (me) prim = std::max(prim, re.abs().maxCoeff());
    if (mi) prim = std::max(prim, ri.abs().maxCoeff());
    double dual_scale = 1.0;
    if (me) dual_scale = std::max(dual_scale, 1.0 + lam.abs().maxCoeff());
    if (mi) dual_scale = std::max(dual_scale, 1.0 + y.maxCoeff());
    const double err = std::max({rd.lpNorm<Eigen::Infinity>() / gscale, prim / pscale, mu / dual_scale});
    if (err < best_err) {
      best_err = err;
      best_d = d;
      best_lam = lam;
      best_p = p;
      best_q = q;
      best_y = y;
      best_t = t;
    }
    if (err <= settings.tolerance) {
      res.converged = true;
      break;
    }
    // Past the attainable accuracy.
    if (mu / dual_scale < 1e-3 * settings.tolerance && err > 10.0 * best_err) break;

    const Arr De = p / zp + q / zq;
    Arr Di = w / y;
    for (int r = 0; r < mi; ++r) {
      if (elastic(r)) Di(r) += t(r) / zt(r);
    }
    // Rows with a small weight would dominate the reduced matrix; they stay
    // in augmented form, the others are eliminated.
    Arr D(m);
    D << De, Di;
    std::vector<int> kept;
    std::vector<char> in_aug(static_cast<std::size_t>(m), 0);
    for (int r = 0; r < m; ++r) {
      if (D(r) < settings.augment_threshold) {
        kept.push_back(r);
        in_aug[static_cast<std::size_t>(r)] = 1;
      }
    }
    const int ns = static_cast<int>(kept.size());
    Arr D_inv = D.inverse();
    for (int r : kept) D_inv(r) = 0.0;
    MatrixXd Kaug = MatrixXd::Zero(n + ns, n + ns);
    {
      const MatrixXd Ms = D_inv.sqrt().matrix().asDiagonal() * M;
      Kaug.topLeftCorner(n, n).selfadjointView<Eigen::Lower>().rankUpdate(Ms.transpose());
      Kaug.topLeftCorner(n, n).triangularView<Eigen::StrictlyUpper>() =
          Kaug.topLeftCorner(n, n).transpose();
      Kaug.topLeftCorner(n, n) += qp.H;
    }
    for (int k = 0; k < ns; ++k) {
      const int r = kept[static_cast<std::size_t>(k)];
      Kaug.block(n + k, 0, 1, n) = M.row(r);
      Kaug.block(0, n + k, n, 1) = M.row(r).transpose();
      Kaug(n + k, n + k) = -D(r) - settings.regularization;
    }
    ldlt.compute(Kaug);
    // Solves H dd + M^T dz = top, M dd - D dz = bottom (regularized on the
    // augmented rows).
    auto solve_kkt = [&](const VectorXd& top, const Arr& bottom, VectorXd& dd, Arr& dz) {
      VectorXd rhs(n + ns);
      rhs.head(n) = top;
      if (m) rhs.head(n).noalias() += M.transpose() * (bottom * D_inv).matrix();
      for (int k = 0; k < ns; ++k) rhs(n + k) = bottom(kept[static_cast<std::size_t>(k)]);
      const VectorXd sol = ldlt.solve(rhs);
      dd = sol.head(n);
      dz = m ? Arr(((M * dd).array() - bottom) * D_inv) : Arr(0);
      for (int k = 0; k < ns; ++k) dz(kept[static_cast<std::size_t>(k)]) = sol(n + k);
    };

    struct Dir {
      VectorXd dd;
      Arr dlam, dp, dq, dy, dw, dt;
    };
    // cp, cq, cw, ct: right-hand sides of the linearized complementarity.
    auto direction = [&](const Arr& cp, const Arr& cq, const Arr& cw, const Arr& ct) {
      Dir s;
      Arr rhs_z(m);
      if (me) rhs_z.head(me) = -re + cp / zp - cq / zq;
      for (int r = 0; r < mi; ++r) {
        rhs_z(me + r) = -ri(r) - cw(r) / y(r) + (elastic(r) ? ct(r) / zt(r) : 0.0);
      }
      Arr dz;
      solve_kkt(-rd, rhs_z, s.dd, dz);
      // Iterative refinement against the unregularized system.
      for (int pass = 0; pass < settings.refinement_steps; ++pass) {
        VectorXd r1 = -rd - qp.H * s.dd;
        if (m) r1.noalias() -= M.transpose() * dz.matrix();
        const Arr r2 = m ? Arr(rhs_z - ((M * s.dd).array() - D * dz)) : Arr(0);
        VectorXd ddc;
        Arr dzc;
        solve_kkt(r1, r2, ddc, dzc);
        s.dd += ddc;
        dz += dzc;
      }
      s.dlam = dz.head(me);
      s.dy = dz.tail(mi);
      s.dp = (cp + p * s.dlam) / zp;
      s.dq = (cq - q * s.dlam) / zq;
      s.dw = (cw - w * s.dy) / y;
      s.dt = Arr::Zero(mi);
      for (int r = 0; r < mi; ++r) {
        if (elastic(r)) s.dt(r) = (ct(r) + t(r) * s.dy(r)) / zt(r);
      }
      return s;
    };
    auto max_step = [&](const Dir& s) {
      double a = 1.0;
      for (int r = 0; r < me; ++r) {
        if (s.dp(r) < 0) a = std::min(a, -p(r) / s.dp(r));
        if (s.dq(r) < 0) a = std::min(a, -q(r) / s.dq(r));
        if (s.dlam(r) > 0) a = std::min(a, zp(r) / s.dlam(r));
        if (s.dlam(r) < 0) a = std::min(a, -zq(r) / s.dlam(r));
      }
      for (int r = 0; r < mi; ++r) {
        if (s.dw(r) < 0) a = std::min(a, -w(r) / s.dw(r));
        if (s.dy(r) < 0) a = std::min(a, -y(r) / s.dy(r));
        if (elastic(r)) {
          if (s.dt(r) < 0) a = std::min(a, -t(r) / s.dt(r));
          if (s.dy(r) > 0) a = std::min(a, zt(r) / s.dy(r));
        }
      }
      return a;
    };

    const Arr cp_aff = -p * zp, cq_aff = -q * zq, cw_aff = -w * y;
    const Arr ct_aff = elastic.select(-t * zt, Arr::Zero(mi));
    const Dir aff = direction(cp_aff, cq_aff, cw_aff, ct_aff);
    const double a_aff = max_step(aff);
    const double mu_aff = gap(p + a_aff * aff.dp, q + a_aff * aff.dq, lam + a_aff * aff.dlam,
                              w + a_aff * aff.dw, y + a_aff * aff.dy, t + a_aff * aff.dt);
    const double sigma = mu > 0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;
    const double smu = sigma * mu;

    const Arr cp = smu - p * zp + aff.dp * aff.dlam;
    const Arr cq = smu - q * zq - aff.dq * aff.dlam;
    const Arr cw = smu - w * y - aff.dw * aff.dy;
    const Arr ct = elastic.select(smu - t * zt + aff.dt * aff.dy, Arr::Zero(mi));
    const Dir step = direction(cp, cq, cw, ct);
    const double a = std::min(1.0, 0.995 * max_step(step));

    d += a * step.dd;
    lam += a * step.dlam;
    p = (p + a * step.dp).max(1e-300);
    q = (q + a * step.dq).max(1e-300);
    w = (w + a * step.dw).max(1e-300);
    y = (y + a * step.dy).max(1e-300);
    t += a * step.dt;
    for (int r = 0; r < me; ++r) lam(r) = std::clamp(lam(r), -rho_e(r) * (1 - 1e-16), rho_e(r) * (1 - 1e-16));
    for (int r = 0; r < mi; ++r) {
      if (elastic(r)) {
        t(r) = std::max(t(r), 1e-300);
        y(r) = std::min(y(r), rho_i(r) * (1.0 - 1e-16));
      } else {
        t(r) = 0.0;
      }
    }
  }
  if (!res.converged) {
    d = best_d;
    lam = best_lam;
    p = best_p;
    q = best_q;
    y = best_y;
    t = best_t;
  }
  res.d = d;
  res.y_eq = lam.matrix();
  res.y_ineq = y.matrix();
  res.eq_gap = (p + q).matrix();
  res.ineq_gap = t.matrix();
  if (settings.polish) detail::polish_active_set(qp, res, 1e-7);
  return res;
}

}  // namespace flatvessel::nlp

#endif  // FLATVESSEL_NLP_QP_HPP
