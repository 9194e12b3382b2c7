#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/orthobasis.hpp"
#include "projreg/training.hpp"

namespace projreg {

namespace detail {
struct ModelSerde;
}

// Reconstruction model built from training pairs (u_i, y_i = A u_i) alone.
// The outputs are orthonormalised incrementally; every accepted output's
// Gram-Schmidt coefficients are mirrored onto the inputs,
//   ub_k = (u_k - sum_i c_i ub_i) / r_k,
// which keeps the defining property  A ub_k = yb_k  without access to A.
// Reconstruction from data y is  sum_i (y, yb_i) ub_i.
class ProjectionModel {
 public:
  void fit(const TrainingSet& pairs, double deptol = kDepTol) {
    validate_training_set(pairs);
    for (size_t i = 0; i < pairs.size(); ++i) {
      fit_pair(pairs.inputs[i], pairs.outputs[i], deptol);
    }
  }

  void fit_pair(const GridSignal& u, const GridSignal& y, double deptol = kDepTol) {
    require_finite(u, "training input");
    const int global = pairs_seen_++;
    if (count_ > 0 && u.size() != ubar_.rows()) {
      throw DimensionError("projection fit: input length changed mid-stream");
    }

    ExtendOutcome out = mgs_extend(ybar_, y, deptol);
    if (!out.accepted()) {
      rejected_.push_back(global);
      return;
    }

    if (count_ == 0) {
      ubar_.resize(u.size(), 8);
      domain_shape_ = u.shape;
    }
    if (count_ == ubar_.cols()) {
      ubar_.conservativeResize(Eigen::NoChange, 2 * ubar_.cols());
    }
    Eigen::VectorXd ub = u.values;
    if (count_ > 0) {
      Eigen::Map<const Eigen::VectorXd> c(out.rcolumn.data(), count_);
      ub.noalias() -= ubar_.leftCols(count_) * c;
    }
    ub /= out.residual_norm;
    ubar_.col(count_) = ub;
    ++count_;
    accepted_.push_back(global);

    if (count_ % kGramSentinelInterval == 0 &&
        latest_gram_deviation(ybar_) > kGramRefreshThreshold) {
      Eigen::MatrixXd e = householder_refresh(ybar_);
      Eigen::Ref<Eigen::MatrixXd> w = ubar_.leftCols(count_);
      apply_refresh_to_mirror(e, w);
      ++refresh_count_;
    }
  }

  int size() const { return count_; }
  bool empty() const { return count_ == 0; }

  const OrthonormalBasis& output_basis() const { return ybar_; }
  const std::vector<double>& rdiag() const { return ybar_.rdiag(); }
  const std::vector<int>& accepted_indices() const { return accepted_; }
  const std::vector<int>& rejected_indices() const { return rejected_; }
  int refresh_count() const { return refresh_count_; }

  Eigen::Ref<const Eigen::MatrixXd> transformed_inputs() const {
    return ubar_.leftCols(count_);
  }
  GridSignal transformed_input(int i) const {
    GridSignal v(ubar_.col(i));
    v.shape = domain_shape_;
    return v;
  }
  const std::optional<GridShape>& domain_shape() const { return domain_shape_; }

  // u_n = sum_{i<n} (y, yb_i) ub_i.
  GridSignal reconstruct(const GridSignal& y, int n = -1) const {
    if (n < 0) n = count_;
    if (n > count_) throw DimensionError("reconstruct: n exceeds model size");
    if (count_ == 0) throw NumericalError("reconstruct: empty model");
    if (y.size() != ybar_.dim()) {
      throw DimensionError("reconstruct: data length mismatch");
    }
    GridSignal out = GridSignal::zeros(ubar_.rows());
    if (n > 0) {
      Eigen::Ref<const Eigen::MatrixXd> q = ybar_.matrix();
      out.values.noalias() = ubar_.leftCols(n) * (q.leftCols(n).transpose() * y.values);
    }
    out.shape = domain_shape_;
    return out;
  }

  // Same formula on perturbed data; kept as a named entry point so call
  // sites distinguish clean from noisy inputs.
  GridSignal reconstruct_noisy(const GridSignal& y_delta, int n = -1) const {
    return reconstruct(y_delta, n);
  }

 private:
  friend struct detail::ModelSerde;

  OrthonormalBasis ybar_;
  Eigen::MatrixXd ubar_;
  int count_ = 0;
  int pairs_seen_ = 0;
  int refresh_count_ = 0;
  std::vector<int> accepted_, rejected_;
  std::optional<GridShape> domain_shape_;
};

// Discrepancy-style cutoff: the largest candidate n whose amplified noise
// bound  delta * sqrt(n) * max_{i<n} 1/rdiag_i  stays below the threshold.
struct ChoiceRule {
  double threshold = 1.0;
  std::vector<int> grid;  // candidate truncation indices; empty = 1..size
};

struct ChoiceResult {
  int n = 1;
  bool no_admissible = false;
};

inline ChoiceResult choose_n(const ProjectionModel& model, const ChoiceRule& rule,
                             double delta) {
  if (model.empty()) throw NumericalError("choose_n: empty model");
  if (delta < 0.0) throw ConfigError("choose_n: negative noise level");
  if (delta == 0.0) return {model.size(), false};

  std::vector<int> candidates;
  if (rule.grid.empty()) {
    candidates.resize(size_t(model.size()));
    for (int i = 0; i < model.size(); ++i) candidates[size_t(i)] = i + 1;
  } else {
    for (int n : rule.grid) {
      if (n >= 1 && n <= model.size()) candidates.push_back(n);
    }
    if (candidates.empty()) {
      throw ConfigError("choose_n: no grid candidates within model size");
    }
  }

  const auto& rdiag = model.rdiag();
  std::vector<double> running_inv_max(rdiag.size());
  double inv_max = 0.0;
  for (size_t i = 0; i < rdiag.size(); ++i) {
    inv_max = std::max(inv_max, 1.0 / rdiag[i]);
    running_inv_max[i] = inv_max;
  }

  ChoiceResult best{1, true};
  for (int n : candidates) {
    const double amplified = delta * std::sqrt(double(n)) * running_inv_max[size_t(n - 1)];
    if (amplified <= rule.threshold && n >= best.n) {
      best.n = n;
      best.no_admissible = false;
    }
  }
  return best;
}

}  // namespace projreg
