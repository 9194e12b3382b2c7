#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "projreg/dual.hpp"
#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/io.hpp"
#include "projreg/operators.hpp"
#include "projreg/projected_operator.hpp"
#include "projreg/projection.hpp"
#include "projreg/training.hpp"
#include "projreg/variational.hpp"

namespace projreg {

// ---------------------------------------------------------------------------
// Report types.  Trend checks carry a verdict instead of a hard assertion:
// consistent / inconsistent with the monitored property, or inconclusive when
// the evidence is too short to judge.
// ---------------------------------------------------------------------------

enum class Verdict { consistent, inconsistent, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::consistent: return "consistent";
    case Verdict::inconsistent: return "inconsistent";
    default: return "inconclusive";
  }
}

struct AssumptionReport {
  std::string name;
  std::vector<int> grid;       // strictly increasing
  std::vector<double> values;  // one finite scalar per grid entry
  Verdict verdict = Verdict::inconclusive;
  std::string notes;
};

inline void validate(const AssumptionReport& r) {
  if (r.grid.size() != r.values.size()) {
    throw DimensionError("assumption report: grid/value length mismatch");
  }
  for (size_t k = 0; k < r.grid.size(); ++k) {
    if (k > 0 && r.grid[k] <= r.grid[k - 1]) {
      throw ConfigError("assumption report: grid must be strictly increasing");
    }
    if (!std::isfinite(r.values[k])) {
      throw NumericalError("assumption report: non-finite value");
    }
  }
}

struct ErrorCurve {
  double delta = 0.0;
  std::vector<int> grid;
  std::vector<double> errors;  // mean relative errors, >= 0
  int argmin_n = 0;            // grid value attaining the minimum error
};

namespace detail {

// Shared trend rule for non-decreasing sequences: the sequence is judged
// settled when the increment across the last decade of the grid contributes
// less than `fraction` of the final value.  A grid that does not span a
// decade cannot be judged.
inline Verdict growth_verdict(const std::vector<int>& grid,
                              const std::vector<double>& values,
                              double fraction = 0.05) {
  if (grid.empty()) return Verdict::inconclusive;
  const int hi = grid.back();
  int lo_pos = -1;
  for (size_t k = 0; k < grid.size(); ++k) {
    if (10 * grid[k] <= hi) lo_pos = static_cast<int>(k);
  }
  if (lo_pos < 0) return Verdict::inconclusive;
  const double total = values.back();
  if (total <= 1e-300) return Verdict::consistent;  // identically zero series
  const double increment = values.back() - values[lo_pos];
  return increment <= fraction * total ? Verdict::consistent
                                       : Verdict::inconsistent;
}

inline void check_grid(const std::vector<int>& grid, int max_n,
                       const char* what) {
  if (grid.empty()) throw ConfigError(std::string(what) + ": empty grid");
  int prev = 0;
  for (int n : grid) {
    if (n <= prev) {
      throw ConfigError(std::string(what) + ": grid must be strictly increasing");
    }
    if (n > max_n) {
      throw ConfigError(std::string(what) + ": grid entry exceeds model size");
    }
    prev = n;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// l1 coefficient sums: partial sums of |(target, uh_i)| along the fitted
// input-side basis.  Bounded sums back the series expansion of the exact
// solution; harmonic-type growth signals the nonconvergence regime.
// ---------------------------------------------------------------------------

inline AssumptionReport l1_partial_sums(const OrthonormalBasis& uhat,
                                        const GridSignal& target,
                                        const std::vector<int>& grid) {
  detail::check_grid(grid, uhat.size(), "l1_partial_sums");
  if (target.size() != uhat.dim()) {
    throw DimensionError("l1_partial_sums: target length mismatch");
  }
  require_finite(target, "l1 target");

  Eigen::Ref<const Eigen::MatrixXd> q = uhat.matrix();
  const int top = grid.back();
  Eigen::VectorXd coeffs =
      (q.leftCols(top).transpose() * target.values).cwiseAbs();

  AssumptionReport report;
  report.name = "l1-coefficient-sums";
  report.grid = grid;
  double running = 0.0;
  size_t gpos = 0;
  for (int i = 0; i < top && gpos < grid.size(); ++i) {
    running += coeffs[i];
    if (i + 1 == grid[gpos]) {
      report.values.push_back(running);
      ++gpos;
    }
  }
  report.verdict = detail::growth_verdict(grid, report.values);
  report.notes = "last-decade increment rule at 5% of the total";
  return report;
}

inline AssumptionReport l1_partial_sums(const InputModel& model,
                                        const GridSignal& target,
                                        const std::vector<int>& grid) {
  return l1_partial_sums(model.input_basis(), target, grid);
}

// ---------------------------------------------------------------------------
// Coefficient-bound check: least-squares coefficients of yh_i against the
// first n mirrored outputs.  The squared coefficient norm is the quantity
// that must stay uniformly bounded; the condition number of the basis matrix
// qualifies how much the numbers can be trusted.
// ---------------------------------------------------------------------------

struct BetaBound {
  Eigen::VectorXd beta;           // coefficients against {yh_j}_{j<=n}
  double coefficient_norm_sq = 0.0;
  double condition = 0.0;         // of the n-column basis matrix
  bool reliable = true;           // false when the system is numerically singular
};

inline BetaBound beta_bound_check(const InputModel& model, int i, int n) {
  if (n < 1 || n > model.size()) {
    throw ConfigError("beta_bound_check: n out of range");
  }
  if (i < 1 || i > model.size()) {
    throw ConfigError("beta_bound_check: pair index out of range");
  }
  Eigen::Ref<const Eigen::MatrixXd> yh = model.mirrored_outputs();
  const auto m = yh.leftCols(n);
  const Eigen::VectorXd target = yh.col(i - 1);

  BetaBound out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  out.condition = (smin > 0.0) ? smax / smin
                               : std::numeric_limits<double>::infinity();
  out.reliable = std::isfinite(out.condition) && out.condition < 1e12;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  out.beta = qr.solve(target);
  out.coefficient_norm_sq = out.beta.squaredNorm();
  return out;
}

// ---------------------------------------------------------------------------
// Exact-coefficient oracle for the sequence-space operator: for target index
// i > n the least-squares coefficients have the closed form
//   gamma_1 = C_n i^-1 a_i,   gamma_k = -gamma_1 k^-1 / a_k  (k = 2..n),
// with C_n = 1 / (1 + sum_{j=n+1}^N j^-2) exact for the truncated operator.
// ---------------------------------------------------------------------------

inline double seidman_tail_constant(int truncation, int n) {
  if (n < 1 || n > truncation) {
    throw ConfigError("seidman_tail_constant: n out of range");
  }
  double tail = 0.0;
  for (int j = truncation; j > n; --j) {  // ascending magnitudes
    tail += 1.0 / (static_cast<double>(j) * static_cast<double>(j));
  }
  return 1.0 / (1.0 + tail);
}

inline std::vector<double> seidman_gamma_analytic(int truncation, int n, int i) {
  if (i < n + 1 || i > truncation) {
    throw ConfigError("seidman_gamma_analytic: requires n+1 <= i <= truncation");
  }
  const double c_n = seidman_tail_constant(truncation, n);
  std::vector<double> gamma(static_cast<size_t>(n));
  gamma[0] = c_n * (1.0 / static_cast<double>(i)) * seidman_diag(i);
  for (int k = 2; k <= n; ++k) {
    gamma[static_cast<size_t>(k - 1)] =
        -gamma[0] * (1.0 / static_cast<double>(k)) / seidman_diag(k);
  }
  return gamma;
}

struct SeidmanGammaReport {
  int truncation = 0, n = 0, i = 0;
  double c_n = 0.0;
  double gamma1_numeric = 0.0;
  double gamma1_analytic = 0.0;
  double max_coefficient_deviation = 0.0;  // over all n coefficients
  double coefficient_norm_sq = 0.0;        // numeric sum of squares
  double condition = 0.0;
};

inline SeidmanGammaReport seidman_gamma_oracle(const InputModel& model,
                                               int truncation, int n, int i) {
  if (i < n + 1) throw ConfigError("seidman_gamma_oracle: requires i >= n+1");
  if (i > model.size()) {
    throw ConfigError("seidman_gamma_oracle: model holds fewer pairs than i");
  }
  BetaBound bb = beta_bound_check(model, i, n);
  std::vector<double> analytic = seidman_gamma_analytic(truncation, n, i);

  SeidmanGammaReport rep;
  rep.truncation = truncation;
  rep.n = n;
  rep.i = i;
  rep.c_n = seidman_tail_constant(truncation, n);
  rep.gamma1_numeric = bb.beta[0];
  rep.gamma1_analytic = analytic[0];
  for (int k = 0; k < n; ++k) {
    rep.max_coefficient_deviation = std::max(
        rep.max_coefficient_deviation,
        std::abs(bb.beta[k] - analytic[static_cast<size_t>(k)]));
  }
  rep.coefficient_norm_sq = bb.coefficient_norm_sq;
  rep.condition = bb.condition;
  return rep;
}

inline SeidmanGammaReport seidman_gamma_oracle(int truncation, int n, int i) {
  SeidmanOperator op(truncation);
  std::vector<GridSignal> inputs;
  inputs.reserve(static_cast<size_t>(i));
  for (int k = 0; k < i; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(truncation);
    e[k] = 1.0;
    inputs.emplace_back(std::move(e));
  }
  InputModel model;
  model.fit(make_pairs(op, inputs, /*normalise=*/false));
  return seidman_gamma_oracle(model, truncation, n, i);
}

// ---------------------------------------------------------------------------
// Strong-convergence conditions: (i) the running sup of |(y, ybar_i)| over
// the output-side residual norms stays bounded, and (ii) the input-side
// residual norms |(u_i, uh_i)| are summable.
// ---------------------------------------------------------------------------

struct StrongConditionReport {
  AssumptionReport ratio;  // running sup of |(y, ybar_i)| / rdiag_i
  AssumptionReport l1;     // partial sums of input-side residual norms

  Verdict overall() const {
    if (ratio.verdict == Verdict::inconsistent ||
        l1.verdict == Verdict::inconsistent) {
      return Verdict::inconsistent;
    }
    if (ratio.verdict == Verdict::inconclusive ||
        l1.verdict == Verdict::inconclusive) {
      return Verdict::inconclusive;
    }
    return Verdict::consistent;
  }
};

inline StrongConditionReport strong_condition_check(const ProjectionModel& model,
                                                    const InputModel& input_model,
                                                    const GridSignal& y) {
  if (model.empty() || input_model.empty()) {
    throw NumericalError("strong_condition_check: empty model");
  }
  const int m = std::min(model.size(), input_model.size());
  Eigen::Ref<const Eigen::MatrixXd> q = model.output_basis().matrix();
  if (y.size() != q.rows()) {
    throw DimensionError("strong_condition_check: data length mismatch");
  }
  Eigen::VectorXd proj_coeffs = q.leftCols(m).transpose() * y.values;

  StrongConditionReport rep;
  rep.ratio.name = "strong-condition-sup-ratio";
  rep.l1.name = "strong-condition-l1-sums";
  double sup = 0.0, running = 0.0;
  for (int i = 0; i < m; ++i) {
    sup = std::max(sup, std::abs(proj_coeffs[i]) / model.rdiag()[i]);
    running += input_model.rdiag()[i];
    rep.ratio.grid.push_back(i + 1);
    rep.ratio.values.push_back(sup);
    rep.l1.grid.push_back(i + 1);
    rep.l1.values.push_back(running);
  }
  rep.ratio.verdict = detail::growth_verdict(rep.ratio.grid, rep.ratio.values);
  rep.ratio.notes = "running sup of |(y, ybar_i)| / |(y_i, ybar_i)|";
  rep.l1.verdict = detail::growth_verdict(rep.l1.grid, rep.l1.values);
  rep.l1.notes = "partial sums of |(u_i, uh_i)| = input-side residual norms";
  return rep;
}

// ---------------------------------------------------------------------------
// Norm bounds on the transformed inputs: for every retained index
//   r_in/r_out <= |ubar_i| <= sqrt(C+1) * r_in/r_out,
// where r_in, r_out are the input/output-side residual norms and C is the
// largest observed squared coefficient norm at n = i-1.
// ---------------------------------------------------------------------------

struct UbarBound {
  int index = 0;  // 1-based retained-pair index
  double lower = 0.0, value = 0.0, upper = 0.0;
};

struct UbarBoundsReport {
  std::vector<UbarBound> bounds;
  double c_estimate = 0.0;
  bool all_hold = true;
  double slack = 1e-8;
};

inline UbarBoundsReport ubar_bounds_check(const ProjectionModel& model,
                                          const InputModel& input_model,
                                          double slack = 1e-8) {
  if (model.empty() || input_model.empty()) {
    throw NumericalError("ubar_bounds_check: empty model");
  }
  const int m = std::min(model.size(), input_model.size());

  UbarBoundsReport rep;
  rep.slack = slack;
  for (int i = 2; i <= m; ++i) {
    BetaBound bb = beta_bound_check(input_model, i, i - 1);
    if (bb.reliable) {
      rep.c_estimate = std::max(rep.c_estimate, bb.coefficient_norm_sq);
    }
  }
  const double factor = std::sqrt(rep.c_estimate + 1.0);
  for (int i = 1; i <= m; ++i) {
    UbarBound b;
    b.index = i;
    b.lower = input_model.rdiag()[i - 1] / model.rdiag()[i - 1];
    b.value = model.transformed_input(i - 1).values.norm();
    b.upper = factor * b.lower;
    rep.all_hold = rep.all_hold && (b.value >= b.lower - slack) &&
                   (b.value <= b.upper + slack);
    rep.bounds.push_back(b);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Residual-decay trend: the output-side residual norms of a compact operator
// must dip towards zero along the fit.  Judged by a ten-fold drop of the
// running minimum; short fits are inconclusive.
// ---------------------------------------------------------------------------

inline AssumptionReport residual_decay_report(const ProjectionModel& model) {
  if (model.empty()) throw NumericalError("residual_decay_report: empty model");
  AssumptionReport rep;
  rep.name = "residual-decay";
  double running = std::numeric_limits<double>::infinity();
  for (int i = 0; i < model.size(); ++i) {
    running = std::min(running, model.rdiag()[i]);
    rep.grid.push_back(i + 1);
    rep.values.push_back(running);
  }
  if (model.size() < 10) {
    rep.verdict = Verdict::inconclusive;
    rep.notes = "fewer than 10 retained pairs";
  } else if (rep.values.back() <= 0.1 * rep.values.front()) {
    rep.verdict = Verdict::consistent;
    rep.notes = "running minimum of the residual norms decayed by >= 10x";
  } else {
    rep.verdict = Verdict::inconsistent;
    rep.notes = "running minimum decayed by less than 10x";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Error curves over the training-set size, one per noise level, averaging
// relative errors over a validation set of exact pairs.  The noise draw is
// fixed per (delta, sample) so the curve varies only through n.
// ---------------------------------------------------------------------------

enum class Method { projection, dual, variational };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::projection: return "projection";
    case Method::dual: return "dual";
    default: return "variational";
  }
}

struct ModelBundle {
  const ProjectionModel* projection = nullptr;
  const DualModel* dual = nullptr;
  const InputModel* input = nullptr;
};

struct SemiconvergenceOptions {
  std::vector<double> deltas;
  std::vector<int> grid;
  NoiseSpec::Mode mode = NoiseSpec::Mode::relative;
  unsigned seed = 1;
  double alpha_c = 1.0;  // weight of the alpha rule for the variational method
};

inline std::vector<ErrorCurve> semiconvergence_curve(
    Method method, const ModelBundle& models, const TrainingSet& validation,
    const SemiconvergenceOptions& opt) {
  int size = 0;
  switch (method) {
    case Method::projection:
      if (!models.projection) throw ConfigError("semiconvergence: projection model required");
      size = models.projection->size();
      break;
    case Method::dual:
      if (!models.dual) throw ConfigError("semiconvergence: dual model required");
      size = models.dual->size();
      break;
    case Method::variational:
      if (!models.input || !models.projection) {
        throw ConfigError(
            "semiconvergence: variational method requires input and projection models");
      }
      size = std::min(models.input->size(), models.projection->size());
      break;
  }
  detail::check_grid(opt.grid, size, "semiconvergence");
  if (opt.deltas.empty()) throw ConfigError("semiconvergence: empty delta list");
  if (validation.size() == 0) throw ConfigError("semiconvergence: empty validation set");

  std::vector<ErrorCurve> curves;
  for (size_t d = 0; d < opt.deltas.size(); ++d) {
    ErrorCurve curve;
    curve.delta = opt.deltas[d];
    curve.grid = opt.grid;
    curve.errors.assign(opt.grid.size(), 0.0);

    for (size_t v = 0; v < validation.size(); ++v) {
      const GridSignal& truth = validation.inputs[v];
      const GridSignal& exact = validation.outputs[v];
      const double truth_norm = norm(truth);
      if (truth_norm == 0.0) {
        throw ConfigError("semiconvergence: zero validation target");
      }
      const unsigned cell_seed = opt.seed + 7919u * static_cast<unsigned>(d) +
                                 104729u * static_cast<unsigned>(v);
      GridSignal y = add_noise(exact, NoiseSpec{opt.deltas[d], opt.mode, cell_seed});
      const double delta_abs = opt.mode == NoiseSpec::Mode::relative
                                   ? opt.deltas[d] * norm(exact)
                                   : opt.deltas[d];

      for (size_t g = 0; g < opt.grid.size(); ++g) {
        const int n = opt.grid[g];
        GridSignal rec(Eigen::VectorXd::Zero(truth.size()));
        switch (method) {
          case Method::projection:
            rec = models.projection->reconstruct(y, n);
            break;
          case Method::dual:
            rec = models.dual->reconstruct(y, n);
            break;
          case Method::variational: {
            const double rho =
                residual_norm(models.projection->output_basis(), y,
                              std::min(n, models.projection->size()));
            const double alpha = choose_alpha(delta_abs, rho, opt.alpha_c);
            rec = solve_tikhonov(*models.input, y, alpha, n).u;
            break;
          }
        }
        curve.errors[g] += (rec - truth).values.norm() / truth_norm;
      }
    }
    for (double& e : curve.errors) e /= static_cast<double>(validation.size());
    const size_t best = static_cast<size_t>(
        std::min_element(curve.errors.begin(), curve.errors.end()) -
        curve.errors.begin());
    curve.argmin_n = curve.grid[best];
    curves.push_back(std::move(curve));
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Emission: JSON for machines, CSV (columns n,value plus optional fixed
// provenance columns) for plotting.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const AssumptionReport& r) {
  return nlohmann::json{{"name", r.name},
                        {"grid", r.grid},
                        {"values", r.values},
                        {"verdict", to_string(r.verdict)},
                        {"notes", r.notes}};
}

inline nlohmann::json to_json(const ErrorCurve& c) {
  return nlohmann::json{{"delta", c.delta},
                        {"grid", c.grid},
                        {"errors", c.errors},
                        {"argmin_n", c.argmin_n}};
}

using ProvenanceColumns = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline void write_n_value_csv(const std::string& path,
                              const std::vector<int>& grid,
                              const std::vector<double>& values,
                              const ProvenanceColumns& provenance) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "n,value";
  for (const auto& kv : provenance) out << "," << kv.first;
  out << "\n";
  for (size_t k = 0; k < grid.size(); ++k) {
    out << grid[k] << "," << format_double(values[k]);
    for (const auto& kv : provenance) out << "," << kv.second;
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

inline void write_report_csv(const std::string& path, const AssumptionReport& r,
                             const ProvenanceColumns& provenance = {}) {
  detail::write_n_value_csv(path, r.grid, r.values, provenance);
}

inline void write_curve_csv(const std::string& path, const ErrorCurve& c,
                            const ProvenanceColumns& provenance = {}) {
  detail::write_n_value_csv(path, c.grid, c.errors, provenance);
}

}  // namespace projreg
