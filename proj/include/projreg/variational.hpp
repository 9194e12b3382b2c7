#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/operators.hpp"
#include "projreg/projected_operator.hpp"

namespace projreg {

// ---------------------------------------------------------------------------
// Discrete isotropic total variation on a pixel grid.
//
// Forward differences with reflexive boundary (the difference across the last
// row/column is zero), stacked as [dx; dy].  With this stencil the gradient
// operator satisfies ||D||^2 <= 8.
// ---------------------------------------------------------------------------

namespace detail {

inline void grad_forward(const Eigen::VectorXd& u, GridShape s,
                         Eigen::VectorXd& dx, Eigen::VectorXd& dy) {
  const int rows = s.rows, cols = s.cols;
  dx.setZero(u.size());
  dy.setZero(u.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int k = r * cols + c;
      if (c + 1 < cols) dx[k] = u[k + 1] - u[k];
      if (r + 1 < rows) dy[k] = u[k + cols] - u[k];
    }
  }
}

// Adjoint of grad_forward: Dt [px; py] = -div(p) for this stencil.
inline void grad_adjoint(const Eigen::VectorXd& px, const Eigen::VectorXd& py,
                         GridShape s, Eigen::VectorXd& out) {
  const int rows = s.rows, cols = s.cols;
  out.setZero(px.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int k = r * cols + c;
      if (c + 1 < cols) {
        out[k] -= px[k];
        out[k + 1] += px[k];
      }
      if (r + 1 < rows) {
        out[k] -= py[k];
        out[k + cols] += py[k];
      }
    }
  }
}

}  // namespace detail

inline double tv_value(const GridSignal& u) {
  if (!u.shape) throw DimensionError("tv_value: signal carries no grid shape");
  Eigen::VectorXd dx, dy;
  detail::grad_forward(u.values, *u.shape, dx, dy);
  double tv = 0.0;
  for (Eigen::Index k = 0; k < dx.size(); ++k) {
    tv += std::sqrt(dx[k] * dx[k] + dy[k] * dy[k]);
  }
  return tv;
}

// ---------------------------------------------------------------------------
// Operator norm estimate via power iteration on K*K (deterministic start).
// The returned value is inflated by 1/safety so step sizes built from it are
// conservative even when the iteration has not fully converged.
// ---------------------------------------------------------------------------
inline double estimate_operator_norm(const LinearOperator& op, int iterations = 20,
                                     unsigned seed = 1234, double safety = 0.95) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd v(op.domain_dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  }
  if (v.norm() == 0.0) v.setOnes();
  v.normalize();
  double lambda = 0.0;
  GridSignal vs(v);
  vs.shape = op.domain_shape();
  for (int it = 0; it < iterations; ++it) {
    GridSignal w = op.adjoint_apply(op.apply(vs));
    lambda = w.values.norm();
    if (lambda == 0.0) return 0.0;
    vs.values = w.values / lambda;
  }
  return std::sqrt(lambda) / safety;
}

// ---------------------------------------------------------------------------
// Quadratic (Tikhonov) regularisation restricted to the fitted input span:
//   min_{u in U_n} ||A P_{U_n} u - y||^2 + 2 alpha ||u||^2.
// In the orthonormal coordinates u = sum_i c_i uh_i this is a small dense
// normal system (M^T M + 2 alpha I) c = M^T y with M = [yh_1 ... yh_n].
// ---------------------------------------------------------------------------

struct TikhonovResult {
  GridSignal u;
  Eigen::VectorXd coefficients;
  double objective = 0.0;
};

inline TikhonovResult solve_tikhonov(const InputModel& model, const GridSignal& y,
                                     double alpha, int n = -1) {
  if (model.empty()) throw NumericalError("solve_tikhonov: empty model");
  if (n < 0) n = model.size();
  if (n < 1 || n > model.size()) {
    throw DimensionError("solve_tikhonov: n out of range");
  }
  if (alpha < 0.0) throw ConfigError("solve_tikhonov: alpha must be >= 0");
  require_finite(y, "data");
  Eigen::Ref<const Eigen::MatrixXd> yh = model.mirrored_outputs();
  if (y.size() != yh.rows()) {
    throw DimensionError("solve_tikhonov: data length mismatch");
  }

  const auto m = yh.leftCols(n);
  Eigen::MatrixXd normal = m.transpose() * m;
  normal.diagonal().array() += 2.0 * alpha;
  Eigen::VectorXd rhs = m.transpose() * y.values;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) {
    normal.diagonal().array() += 1e-12 * normal.trace() / static_cast<double>(n);
    llt.compute(normal);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("solve_tikhonov: normal equations not positive definite");
    }
  }
  TikhonovResult res;
  res.coefficients = llt.solve(rhs);

  Eigen::Ref<const Eigen::MatrixXd> uh = model.input_basis().matrix();
  res.u = GridSignal(uh.leftCols(n) * res.coefficients);
  res.u.shape = model.input_basis().shape();
  res.objective = (m * res.coefficients - y.values).squaredNorm() +
                  2.0 * alpha * res.coefficients.squaredNorm();
  return res;
}

// ---------------------------------------------------------------------------
// Total-variation regularisation
//   min_u 0.5 ||K u - y||^2 + alpha TV(u)
// solved with the Chambolle-Pock primal-dual method on B = [D; K]:
//   p <- proj_{|.|<=alpha} (p + sigma D ubar)      (per-pixel 2-ball)
//   q <- (q + sigma (K ubar - y)) / (1 + sigma)
//   u <- u - tau (D^T p + K^* q),   ubar <- 2 u_new - u_old
// with tau = sigma = 0.95 / L and L = sqrt(8 + ||K||^2).  Convergence is
// monitored through the scaled primal-dual residuals; if the tolerance is not
// reached the best iterate seen (lowest objective) is returned with
// converged = false.
// ---------------------------------------------------------------------------

struct TvOptions {
  double alpha = 1e-3;
  int max_iterations = 2000;
  double tolerance = 1e-6;   // on the combined scaled residual
  int check_interval = 10;
  std::optional<GridShape> shape;  // required when K carries no domain shape
  unsigned norm_seed = 1234;
  int norm_iterations = 20;
  // Explicit primal/dual step sizes; when unset both are derived from the
  // operator-norm estimate as 0.95 / sqrt(8 + ||K||^2).
  std::optional<double> step_tau;
  std::optional<double> step_sigma;
};

struct TvResult {
  GridSignal u;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;   // combined scaled primal-dual residual at exit
  double objective = 0.0;  // 0.5 ||K u - y||^2 + alpha TV(u)
  double operator_norm = 0.0;
};

inline TvResult solve_tv(const LinearOperator& op, const GridSignal& y,
                         const TvOptions& opt) {
  if (opt.alpha < 0.0) throw ConfigError("solve_tv: alpha must be >= 0");
  if (opt.max_iterations < 1) throw ConfigError("solve_tv: max_iterations must be >= 1");
  require_finite(y, "data");
  if (y.size() != op.range_dim()) throw DimensionError("solve_tv: data length mismatch");

  std::optional<GridShape> shape = opt.shape ? opt.shape : op.domain_shape();
  if (!shape) throw ConfigError("solve_tv: domain grid shape unknown; set TvOptions::shape");
  if (static_cast<Eigen::Index>(shape->pixels()) != op.domain_dim()) {
    throw DimensionError("solve_tv: shape does not match operator domain");
  }
  const GridShape s = *shape;
  const Eigen::Index np = op.domain_dim();

  const double norm_k =
      estimate_operator_norm(op, opt.norm_iterations, opt.norm_seed);
  const double big_l = std::sqrt(8.0 + norm_k * norm_k);
  const double tau = opt.step_tau ? *opt.step_tau : 0.95 / big_l;
  const double sigma = opt.step_sigma ? *opt.step_sigma : 0.95 / big_l;
  if (tau <= 0.0 || sigma <= 0.0) throw ConfigError("solve_tv: step sizes must be > 0");

  Eigen::VectorXd u = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd ubar = u;
  Eigen::VectorXd px = Eigen::VectorXd::Zero(np), py = Eigen::VectorXd::Zero(np);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(op.range_dim());
  Eigen::VectorXd dx(np), dy(np), div(np);

  auto apply_k = [&](const Eigen::VectorXd& v) {
    GridSignal g(v);
    g.shape = s;
    return op.apply(g).values;
  };
  auto apply_kt = [&](const Eigen::VectorXd& z) {
    GridSignal g(z);
    g.shape = op.range_shape();
    return op.adjoint_apply(g).values;
  };
  auto objective_at = [&](const Eigen::VectorXd& v) {
    GridSignal g(v);
    g.shape = s;
    return 0.5 * (apply_k(v) - y.values).squaredNorm() + opt.alpha * tv_value(g);
  };

  TvResult res;
  res.operator_norm = norm_k;
  Eigen::VectorXd best_u = u;
  double best_obj = objective_at(u);
  double last_residual = std::numeric_limits<double>::infinity();

  Eigen::VectorXd u_prev(np), px_prev(np), py_prev(np), q_prev(q.size());
  for (int it = 1; it <= opt.max_iterations; ++it) {
    u_prev = u;
    px_prev = px;
    py_prev = py;
    q_prev = q;

    // Dual ascent with proximal steps.
    detail::grad_forward(ubar, s, dx, dy);
    px.noalias() += sigma * dx;
    py.noalias() += sigma * dy;
    for (Eigen::Index k = 0; k < np; ++k) {
      const double mag = std::sqrt(px[k] * px[k] + py[k] * py[k]);
      if (mag > opt.alpha) {
        const double scale = opt.alpha / mag;
        px[k] *= scale;
        py[k] *= scale;
      }
    }
    q = (q + sigma * (apply_k(ubar) - y.values)) / (1.0 + sigma);

    // Primal descent and extrapolation.
    detail::grad_adjoint(px, py, s, div);
    Eigen::VectorXd u_new = u - tau * (div + apply_kt(q));
    ubar = 2.0 * u_new - u;
    u = u_new;
    res.iterations = it;

    if (it % opt.check_interval == 0 || it == opt.max_iterations) {
      // Scaled primal-dual residuals (first-order optimality surrogate).
      detail::grad_adjoint(px - px_prev, py - py_prev, s, div);
      const Eigen::VectorXd du = u_prev - u;
      double prim = ((du / tau) - div - apply_kt(q - q_prev)).norm() /
                    (1.0 + u.norm());
      detail::grad_forward(du, s, dx, dy);
      double dual_p =
          std::sqrt(((px_prev - px) / sigma - dx).squaredNorm() +
                    ((py_prev - py) / sigma - dy).squaredNorm()) /
          (1.0 + std::sqrt(px.squaredNorm() + py.squaredNorm()));
      double dual_q = ((q_prev - q) / sigma - apply_k(du)).norm() / (1.0 + q.norm());
      last_residual = prim + dual_p + dual_q;

      const double obj = objective_at(u);
      if (obj < best_obj) {
        best_obj = obj;
        best_u = u;
      }
      if (last_residual <= opt.tolerance) {
        res.converged = true;
        break;
      }
    }
  }

  if (!res.converged) {
    const double obj = objective_at(u);
    if (obj < best_obj) {
      best_obj = obj;
      best_u = u;
    }
    u = best_u;
  }
  res.u = GridSignal(u);
  res.u.shape = s;
  res.residual = last_residual;
  res.objective = best_obj;
  if (res.converged) res.objective = objective_at(u);
  return res;
}

// ---------------------------------------------------------------------------
// Bundled problem description: an operator restricted to the fitted span, the
// measured data, the regularisation weight, and the penalty to minimise.
// ---------------------------------------------------------------------------

enum class Penalty { tikhonov, tv };

struct VariationalProblem {
  ProjectedOperator op;
  GridSignal data;
  double alpha = 1e-3;
  Penalty penalty = Penalty::tikhonov;
  TvOptions controls;  // iteration caps / tolerances / step sizes for tv
};

inline TikhonovResult solve_tikhonov(const VariationalProblem& p) {
  if (p.penalty != Penalty::tikhonov) {
    throw ConfigError("solve_tikhonov: problem penalty is not tikhonov");
  }
  if (p.alpha <= 0.0) throw ConfigError("variational problem: alpha must be > 0");
  return solve_tikhonov(p.op.model(), p.data, p.alpha, p.op.truncation());
}

inline TvResult solve_tv(const VariationalProblem& p) {
  if (p.penalty != Penalty::tv) {
    throw ConfigError("solve_tv: problem penalty is not tv");
  }
  if (p.alpha <= 0.0) throw ConfigError("variational problem: alpha must be > 0");
  if (!p.controls.shape && !p.op.domain_shape()) {
    throw ConfigError("variational problem: grid shape required for tv penalty");
  }
  TvOptions o = p.controls;
  o.alpha = p.alpha;
  return solve_tv(p.op, p.data, o);
}

// ---------------------------------------------------------------------------
// A-priori regularisation weight alpha = c (delta + rho), where delta is the
// noise level and rho measures how far the data sits from the fitted output
// span.  Floored away from zero so downstream solves stay well posed.
// ---------------------------------------------------------------------------
inline double choose_alpha(double delta, double rho, double c = 1.0) {
  if (delta < 0.0 || rho < 0.0 || c <= 0.0) {
    throw ConfigError("choose_alpha: delta, rho must be >= 0 and c > 0");
  }
  return std::max(c * (delta + rho), 1e-14);
}

// Distance from the data to the span of the fitted outputs, the natural rho
// for choose_alpha when only training pairs are available.
inline double output_span_distance(const OrthonormalBasis& outputs,
                                   const GridSignal& y, int n = -1) {
  return residual_norm(outputs, y, n);
}

}  // namespace projreg
