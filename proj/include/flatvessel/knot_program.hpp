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

#ifndef FLATVESSEL_KNOT_PROGRAM_HPP
#define FLATVESSEL_KNOT_PROGRAM_HPP

#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "flatvessel/errors.hpp"
#include "flatvessel/flat_discretization.hpp"
#include "flatvessel/flat_parametrization.hpp"
#include "flatvessel/nlp/problem.hpp"
#include "flatvessel/obstacle_field.hpp"

namespace flatvessel {

using Vector9d = Eigen::Matrix<double, 9, 1>;
using Matrix9d = Eigen::Matrix<double, 9, 9>;

/// Scalar quantities available at every knot, each a smooth function of the
/// local flat sample (z, zd, zdd).
enum class Channel : int {
  kTauU = 0,
  kTauV,
  kTauR,
  kX,
  kY,
  kPsi,
  kU,
  kV,
  kR,
  kObstacle,     // smooth union of the obstacle field at the knot time
  kPlanarSpeed,  // sqrt(xd^2 + yd^2 + delta^2) - delta
};
inline constexpr int kChannelCount = 11;

inline Channel tau_channel(int i) { return static_cast<Channel>(static_cast<int>(Channel::kTauU) + i); }
inline Channel state_channel(int i) { return static_cast<Channel>(static_cast<int>(Channel::kX) + i); }

struct KnotTerm {
  int knot;
  Channel channel;
  double coeff;
};

struct DirectTerm {
  int index;  // into the full decision layout
  double coeff;
};

/// constant + sum coeff * channel(knot) + sum coeff * xi(index)
struct ProgramRow {
  std::vector<KnotTerm> knot_terms;
  std::vector<DirectTerm> direct_terms;
  double constant = 0.0;
  double weight = 1.0;  // cost rows only
  std::string label;
};

/// Local channel values at one knot.
template <typename T>
std::array<T, kChannelCount> knot_channels(const Eigen::Matrix<T, 9, 1>& p, double t,
                                           const VesselParams& params, const ObstacleField* field,
                                           double speed_delta, bool want_obstacle) {
  using std::sqrt;
  const Vec3<T> z = p.template segment<3>(0);
  const Vec3<T> zd = p.template segment<3>(3);
  const Vec3<T> zdd = p.template segment<3>(6);
  const Vec3<T> tau = flat_input<T>(z, zd, zdd, params);
  const Vec3<T> nu = flat_body_velocity<T>(z, zd);
  std::array<T, kChannelCount> out;
  for (int i = 0; i < 3; ++i) {
    out[static_cast<std::size_t>(i)] = tau(i);
    out[static_cast<std::size_t>(3 + i)] = z(i);
    out[static_cast<std::size_t>(6 + i)] = nu(i);
  }
  out[9] = (want_obstacle && field != nullptr && !field->empty())
               ? field->union_value<T>(z(0), z(1), t)
               : T(0.0) * z(0);
  out[10] = sqrt(zd(0) * zd(0) + zd(1) * zd(1) + speed_delta * speed_delta) - speed_delta;
  return out;
}

/// Transcription of a flat-output trajectory problem whose constraints and
/// cost terms are linear combinations of knot-local channels. The local
/// sample at knot k is affine in the decision vector, which yields exact
/// Jacobians from 9-dimensional forward-mode derivatives.
class KnotProgram {
 public:
  struct Options {
    VesselParams params;
    ObstacleField field;
    double speed_delta = 1e-3;
  };

  /// `fixed` has the full layout length; finite entries are substituted and
  /// removed from the optimization vector, NaN entries stay free.
  KnotProgram(SampleGrid grid, DecisionLayout layout, Options options,
              Eigen::VectorXd fixed = Eigen::VectorXd())
      : grid_(std::move(grid)), layout_(layout), opt_(std::move(options)) {
    if (layout_.segments() != grid_.segments()) {
      throw ContractViolation("KnotProgram: layout and grid disagree on the segment count");
    }
    const int full = layout_.size();
    if (fixed.size() == 0) fixed = Eigen::VectorXd::Constant(full, std::nan(""));
    if (fixed.size() != full) throw ContractViolation("KnotProgram: fixed vector has wrong length");
    fixed_ = fixed;
    free_of_full_.assign(static_cast<std::size_t>(full), -1);
    for (int j = 0; j < full; ++j) {
      if (std::isnan(fixed_(j))) {
        free_of_full_[static_cast<std::size_t>(j)] = static_cast<int>(full_of_free_.size());
        full_of_free_.push_back(j);
      }
    }
    build_knot_maps();
    cache_ = std::make_shared<Cache>();
  }

  const SampleGrid& grid() const { return grid_; }
  const DecisionLayout& layout() const { return layout_; }
  int free_size() const { return static_cast<int>(full_of_free_.size()); }
  const Options& options() const { return opt_; }

  void add_equality(ProgramRow r) { add(eq_, std::move(r)); }
  void add_inequality(ProgramRow r) { add(ineq_, std::move(r)); }
  /// cost += weight * row^2
  void add_squared_cost(ProgramRow r) { add(sq_, std::move(r)); }
  /// cost += weight * row
  void add_linear_cost(ProgramRow r) { add(lin_, std::move(r)); }

  const std::vector<ProgramRow>& equalities() const { return eq_; }
  const std::vector<ProgramRow>& inequalities() const { return ineq_; }

  Eigen::VectorXd to_full(const Eigen::VectorXd& x) const {
    Eigen::VectorXd xi = fixed_;
    for (std::size_t j = 0; j < full_of_free_.size(); ++j) xi(full_of_free_[j]) = x(static_cast<Eigen::Index>(j));
    return xi;
  }
  Eigen::VectorXd to_free(const Eigen::VectorXd& xi) const {
    Eigen::VectorXd x(free_size());
    for (std::size_t j = 0; j < full_of_free_.size(); ++j) x(static_cast<Eigen::Index>(j)) = xi(full_of_free_[j]);
    return x;
  }

  Vector9d knot_sample(const Eigen::VectorXd& x, int k) const {
    return P_[static_cast<std::size_t>(k)] * x + c_[static_cast<std::size_t>(k)];
  }

  double cost(const Eigen::VectorXd& x) const {
    const auto& v = values(x);
    double f = 0.0;
    for (const auto& r : sq_) {
      const double e = row_value(r, v, x);
      f += r.weight * e * e;
    }
    for (const auto& r : lin_) f += r.weight * row_value(r, v, x);
    return f;
  }
  Eigen::VectorXd eq_values(const Eigen::VectorXd& x) const { return rows_value(eq_, x); }
  Eigen::VectorXd ineq_values(const Eigen::VectorXd& x) const { return rows_value(ineq_, x); }

  Eigen::VectorXd cost_gradient(const Eigen::VectorXd& x) const {
    const auto& v = values(x);
    const auto& g = gradients(x);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(free_size());
    for (const auto& r : sq_) accumulate_row_gradient(r, g, 2.0 * r.weight * row_value(r, v, x), grad);
    for (const auto& r : lin_) accumulate_row_gradient(r, g, r.weight, grad);
    return grad;
  }
  Eigen::MatrixXd eq_jacobian(const Eigen::VectorXd& x) const { return rows_jacobian(eq_, x); }
  Eigen::MatrixXd ineq_jacobian(const Eigen::VectorXd& x) const { return rows_jacobian(ineq_, x); }

  /// Gauss-Newton part of the squared cost rows plus the curvature of every
  /// knot-local channel; with `convexify` each knot block is clipped to be
  /// positive semidefinite.
  Eigen::MatrixXd lagrangian_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& y_eq,
                                     const Eigen::VectorXd& y_ineq, bool convexify = false) const {
    const int n = free_size();
    const int knots = grid_.knots();
    const auto& v = values(x);
    const auto& g = gradients(x);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::array<double, kChannelCount>> mu(static_cast<std::size_t>(knots));
    for (auto& m : mu) m.fill(0.0);
    auto spread = [&](const ProgramRow& r, double w) {
      if (w == 0.0) return;
      for (const auto& t : r.knot_terms) {
        mu[static_cast<std::size_t>(t.knot)][static_cast<std::size_t>(t.channel)] += w * t.coeff;
      }
    };
    for (std::size_t i = 0; i < eq_.size(); ++i) spread(eq_[i], y_eq(static_cast<Eigen::Index>(i)));
    for (std::size_t i = 0; i < ineq_.size(); ++i) spread(ineq_[i], y_ineq(static_cast<Eigen::Index>(i)));
    for (const auto& r : lin_) spread(r, r.weight);
    Eigen::VectorXd jr(n);
    for (const auto& r : sq_) {
      jr.setZero();
      accumulate_row_gradient(r, g, 1.0, jr);
      H.selfadjointView<Eigen::Lower>().rankUpdate(jr, 2.0 * r.weight);
      spread(r, 2.0 * r.weight * row_value(r, v, x));
    }
    H.triangularView<Eigen::StrictlyUpper>() = H.transpose();

    for (int k = 0; k < knots; ++k) {
      const auto& m = mu[static_cast<std::size_t>(k)];
      bool any = false;
      for (double w : m) any = any || w != 0.0;
      if (!any) continue;
      const Matrix9d Hk = local_hessian(knot_sample(x, k), k, m, convexify);
      const auto& P = P_[static_cast<std::size_t>(k)];
      H.noalias() += P.transpose() * (Hk * P);
    }
    return H;
  }

  std::string describe_row(bool equality, int row) const {
    const auto& rows = equality ? eq_ : ineq_;
    if (row < 0 || row >= static_cast<int>(rows.size())) return "row " + std::to_string(row);
    const auto& r = rows[static_cast<std::size_t>(row)];
    std::string s = r.label.empty() ? std::string(equality ? "equality " : "inequality ") +
                                          std::to_string(row)
                                    : r.label;
    if (!r.knot_terms.empty()) s += " (knot " + std::to_string(r.knot_terms.front().knot) + ")";
    return s;
  }

  /// NLP view on the free variables. The program must outlive the problem.
  nlp::NlpProblem problem(Eigen::VectorXd lower_full = Eigen::VectorXd(),
                          Eigen::VectorXd upper_full = Eigen::VectorXd()) const {
    nlp::NlpProblem p;
    p.n = free_size();
    p.m_eq = static_cast<int>(eq_.size());
    p.m_ineq = static_cast<int>(ineq_.size());
    if (lower_full.size() == layout_.size()) p.lower = to_free(lower_full);
    if (upper_full.size() == layout_.size()) p.upper = to_free(upper_full);
    p.cost = [this](const Eigen::VectorXd& x) { return cost(x); };
    p.eq = [this](const Eigen::VectorXd& x) { return eq_values(x); };
    p.ineq = [this](const Eigen::VectorXd& x) { return ineq_values(x); };
    p.cost_gradient = [this](const Eigen::VectorXd& x) { return cost_gradient(x); };
    p.eq_jacobian = [this](const Eigen::VectorXd& x) { return eq_jacobian(x); };
    p.ineq_jacobian = [this](const Eigen::VectorXd& x) { return ineq_jacobian(x); };
    p.lagrangian_hessian = [this](const Eigen::VectorXd& x, const Eigen::VectorXd& ye,
                                  const Eigen::VectorXd& yi) { return lagrangian_hessian(x, ye, yi); };
    p.convex_hessian_model = [this](const Eigen::VectorXd& x, const Eigen::VectorXd& ye,
                                    const Eigen::VectorXd& yi) { return lagrangian_hessian(x, ye, yi, true); };
    p.describe_row = [this](bool eq, int row) { return describe_row(eq, row); };
    return p;
  }

 private:
  using ChannelValues = std::vector<std::array<double, kChannelCount>>;
  using ChannelGradients = std::vector<std::array<Vector9d, kChannelCount>>;
  using Ad = Eigen::AutoDiffScalar<Vector9d>;

  struct Cache {
    std::mutex mutex;
    Eigen::VectorXd x_values, x_grads;
    ChannelValues values;
    ChannelGradients grads;
  };

  void add(std::vector<ProgramRow>& rows, ProgramRow r) {
    for (const auto& t : r.knot_terms) {
      if (t.knot < 0 || t.knot >= grid_.knots()) throw ContractViolation("KnotProgram: knot out of range");
      if (t.channel == Channel::kObstacle) needs_obstacle_ = true;
    }
    for (const auto& d : r.direct_terms) {
      if (d.index < 0 || d.index >= layout_.size()) throw ContractViolation("KnotProgram: index out of range");
    }
    rows.push_back(std::move(r));
  }

  void build_knot_maps() {
    const int n = free_size();
    const int knots = grid_.knots();
    const int block = layout_.block();
    P_.assign(static_cast<std::size_t>(knots), Eigen::Matrix<double, 9, Eigen::Dynamic>::Zero(9, n));
    c_.assign(static_cast<std::size_t>(knots), Vector9d::Zero());
    // Coefficients over one flat dimension's block [z0, zd0, zdd_0..N].
    std::vector<Eigen::RowVectorXd> pos(static_cast<std::size_t>(knots)), vel(static_cast<std::size_t>(knots));
    pos[0] = Eigen::RowVectorXd::Zero(block);
    vel[0] = Eigen::RowVectorXd::Zero(block);
    pos[0](0) = 1.0;
    vel[0](1) = 1.0;
    for (int k = 0; k < grid_.segments(); ++k) {
      const double T = grid_.step(k);
      auto& p1 = pos[static_cast<std::size_t>(k) + 1];
      auto& v1 = vel[static_cast<std::size_t>(k) + 1];
      p1 = pos[static_cast<std::size_t>(k)] + T * vel[static_cast<std::size_t>(k)];
      v1 = vel[static_cast<std::size_t>(k)];
      p1(2 + k) += T * T / 3.0;
      p1(3 + k) += T * T / 6.0;
      v1(2 + k) += T / 2.0;
      v1(3 + k) += T / 2.0;
    }
    for (int k = 0; k < knots; ++k) {
      for (int i = 0; i < 3; ++i) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(block);
        acc(2 + k) = 1.0;
        const Eigen::RowVectorXd* rows[3] = {&pos[static_cast<std::size_t>(k)], &vel[static_cast<std::size_t>(k)], &acc};
        for (int d = 0; d < 3; ++d) {
          const int r = 3 * d + i;  // z_i, zd_i, zdd_i
          for (int b = 0; b < block; ++b) {
            const double coef = (*rows[d])(b);
            if (coef == 0.0) continue;
            const int full_index = i * block + b;
            const int free_index = free_of_full_[static_cast<std::size_t>(full_index)];
            if (free_index >= 0) {
              P_[static_cast<std::size_t>(k)](r, free_index) += coef;
            } else {
              c_[static_cast<std::size_t>(k)](r) += coef * fixed_(full_index);
            }
          }
        }
      }
    }
  }

  const ChannelValues& values(const Eigen::VectorXd& x) const {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    if (cache_->x_values.size() == x.size() && cache_->x_values == x) return cache_->values;
    if (x.size() != free_size()) {
      throw ContractViolation("KnotProgram: decision vector has length " + std::to_string(x.size()) +
                              ", expected " + std::to_string(free_size()));
    }
    ChannelValues v(static_cast<std::size_t>(grid_.knots()));
    for (int k = 0; k < grid_.knots(); ++k) {
      v[static_cast<std::size_t>(k)] = knot_channels<double>(knot_sample(x, k), grid_.time(k), opt_.params,
                                                             &opt_.field, opt_.speed_delta, needs_obstacle_);
    }
    cache_->values = std::move(v);
    cache_->x_values = x;
    return cache_->values;
  }

  std::array<Vector9d, kChannelCount> local_gradients(const Vector9d& p, int k) const {
    Eigen::Matrix<Ad, 9, 1> pa;
    for (int j = 0; j < 9; ++j) pa(j) = Ad(p(j), 9, j);
    const auto ch = knot_channels<Ad>(pa, grid_.time(k), opt_.params, &opt_.field, opt_.speed_delta,
                                      needs_obstacle_);
    std::array<Vector9d, kChannelCount> out;
    for (int c = 0; c < kChannelCount; ++c) {
      const auto& d = ch[static_cast<std::size_t>(c)].derivatives();
      out[static_cast<std::size_t>(c)] = d.size() == 9 ? Vector9d(d) : Vector9d::Zero();
    }
    return out;
  }

  const ChannelGradients& gradients(const Eigen::VectorXd& x) const {
    {
      std::lock_guard<std::mutex> lock(cache_->mutex);
      if (cache_->x_grads.size() == x.size() && cache_->x_grads == x) return cache_->grads;
    }
    ChannelGradients g(static_cast<std::size_t>(grid_.knots()));
    for (int k = 0; k < grid_.knots(); ++k) g[static_cast<std::size_t>(k)] = local_gradients(knot_sample(x, k), k);
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->grads = std::move(g);
    cache_->x_grads = x;
    return cache_->grads;
  }

  Matrix9d local_hessian(const Vector9d& p, int k, const std::array<double, kChannelCount>& mu,
                         bool convexify) const {
    auto weighted = [&](const Vector9d& q) {
      const auto g = local_gradients(q, k);
      Vector9d s = Vector9d::Zero();
      for (int c = 0; c < kChannelCount; ++c) {
        if (mu[static_cast<std::size_t>(c)] != 0.0) s += mu[static_cast<std::size_t>(c)] * g[static_cast<std::size_t>(c)];
      }
      return s;
    };
    Matrix9d Hk;
    for (int j = 0; j < 9; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(p(j)));
      Vector9d qp = p, qm = p;
      qp(j) += h;
      qm(j) -= h;
      Hk.col(j) = (weighted(qp) - weighted(qm)) / (2.0 * h);
    }
    Hk = 0.5 * (Hk + Hk.transpose()).eval();
    if (!convexify) return Hk;
    Eigen::SelfAdjointEigenSolver<Matrix9d> es(Hk);
    const Vector9d lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  }

  double row_value(const ProgramRow& r, const ChannelValues& v, const Eigen::VectorXd& x) const {
    double s = r.constant;
    for (const auto& t : r.knot_terms) {
      s += t.coeff * v[static_cast<std::size_t>(t.knot)][static_cast<std::size_t>(t.channel)];
    }
    for (const auto& d : r.direct_terms) {
      const int f = free_of_full_[static_cast<std::size_t>(d.index)];
      s += d.coeff * (f >= 0 ? x(f) : fixed_(d.index));
    }
    return s;
  }

  void accumulate_row_gradient(const ProgramRow& r, const ChannelGradients& g, double scale,
                               Eigen::VectorXd& out) const {
    for (const auto& t : r.knot_terms) {
      const Vector9d& gl = g[static_cast<std::size_t>(t.knot)][static_cast<std::size_t>(t.channel)];
      out.noalias() += (scale * t.coeff) * (P_[static_cast<std::size_t>(t.knot)].transpose() * gl);
    }
    for (const auto& d : r.direct_terms) {
      const int f = free_of_full_[static_cast<std::size_t>(d.index)];
      if (f >= 0) out(f) += scale * d.coeff;
    }
  }

  Eigen::VectorXd rows_value(const std::vector<ProgramRow>& rows, const Eigen::VectorXd& x) const {
    const auto& v = values(x);
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = row_value(rows[i], v, x);
    return out;
  }

  Eigen::MatrixXd rows_jacobian(const std::vector<ProgramRow>& rows, const Eigen::VectorXd& x) const {
    const auto& g = gradients(x);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), free_size());
    Eigen::VectorXd row(free_size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      row.setZero();
      accumulate_row_gradient(rows[i], g, 1.0, row);
      J.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return J;
  }

  SampleGrid grid_;
  DecisionLayout layout_;
  Options opt_;
  Eigen::VectorXd fixed_;
  std::vector<int> free_of_full_;
  std::vector<int> full_of_free_;
  std::vector<Eigen::Matrix<double, 9, Eigen::Dynamic>> P_;
  std::vector<Vector9d> c_;
  std::vector<ProgramRow> eq_, ineq_, sq_, lin_;
  bool needs_obstacle_ = false;
  std::shared_ptr<Cache> cache_;
};

}  // namespace flatvessel

#endif  // FLATVESSEL_KNOT_PROGRAM_HPP
