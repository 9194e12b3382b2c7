#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/operators.hpp"
#include "projreg/orthobasis.hpp"
#include "projreg/training.hpp"

namespace projreg {

namespace detail {
struct ModelSerde;
}

// Input-side mirror of ProjectionModel: the inputs are orthonormalised and
// the Gram-Schmidt coefficients are replayed on the outputs,
//   yh_k = (y_k - sum_i c_i yh_i) / r_k,
// so A uh_k = yh_k. This is what makes A P_{U_n} computable without A:
//   A P_{U_n} u = sum_i (u, uh_i) yh_i.
class InputModel {
 public:
  void fit(const TrainingSet& pairs, double deptol = kDepTol) {
    validate_training_set(pairs);
    for (size_t i = 0; i < pairs.size(); ++i) {
      fit_pair(pairs.inputs[i], pairs.outputs[i], deptol);
    }
  }

  void fit_pair(const GridSignal& u, const GridSignal& y, double deptol = kDepTol) {
    require_finite(y, "training output");
    const int global = pairs_seen_++;
    if (count_ > 0 && y.size() != yhat_.rows()) {
      throw DimensionError("input-side fit: output length changed mid-stream");
    }

    ExtendOutcome out = mgs_extend(uhat_, u, deptol);
    if (!out.accepted()) {
      rejected_.push_back(global);
      return;
    }

    if (count_ == 0) {
      yhat_.resize(y.size(), 8);
      range_shape_ = y.shape;
    }
    if (count_ == yhat_.cols()) {
      yhat_.conservativeResize(Eigen::NoChange, 2 * yhat_.cols());
    }
    Eigen::VectorXd yh = y.values;
    if (count_ > 0) {
      Eigen::Map<const Eigen::VectorXd> c(out.rcolumn.data(), count_);
      yh.noalias() -= yhat_.leftCols(count_) * c;
    }
    yh /= out.residual_norm;
    yhat_.col(count_) = yh;
    ++count_;
    accepted_.push_back(global);

    if (count_ % kGramSentinelInterval == 0 &&
        latest_gram_deviation(uhat_) > kGramRefreshThreshold) {
      Eigen::MatrixXd e = householder_refresh(uhat_);
      Eigen::Ref<Eigen::MatrixXd> w = yhat_.leftCols(count_);
      apply_refresh_to_mirror(e, w);
    }
  }

  int size() const { return count_; }
  bool empty() const { return count_ == 0; }

  const OrthonormalBasis& input_basis() const { return uhat_; }
  const std::vector<double>& rdiag() const { return uhat_.rdiag(); }
  const std::vector<int>& accepted_indices() const { return accepted_; }
  const std::vector<int>& rejected_indices() const { return rejected_; }

  Eigen::Ref<const Eigen::MatrixXd> mirrored_outputs() const {
    return yhat_.leftCols(count_);
  }
  GridSignal mirrored_output(int i) const {
    GridSignal v(yhat_.col(i));
    v.shape = range_shape_;
    return v;
  }
  const std::optional<GridShape>& range_shape() const { return range_shape_; }

 private:
  friend struct detail::ModelSerde;

  OrthonormalBasis uhat_;
  Eigen::MatrixXd yhat_;
  int count_ = 0;
  int pairs_seen_ = 0;
  std::vector<int> accepted_, rejected_;
  std::optional<GridShape> range_shape_;
};

inline InputModel fit_input_side(const TrainingSet& pairs, double deptol = kDepTol) {
  InputModel m;
  m.fit(pairs, deptol);
  return m;
}

// The forward map restricted to the fitted input span, usable anywhere a
// LinearOperator is: K u = A P_{U_n} u, K* z = P_{U_n} A* z.
class ProjectedOperator : public LinearOperator {
 public:
  explicit ProjectedOperator(const InputModel& model, int n = -1)
      : model_(&model), n_(n < 0 ? model.size() : n) {
    if (model.empty()) throw NumericalError("projected operator: empty model");
    if (n_ < 1 || n_ > model.size()) {
      throw DimensionError("projected operator: n out of range");
    }
  }

  Eigen::Index domain_dim() const override { return model_->input_basis().dim(); }
  Eigen::Index range_dim() const override { return model_->mirrored_outputs().rows(); }
  std::optional<GridShape> domain_shape() const override {
    return model_->input_basis().shape();
  }
  std::optional<GridShape> range_shape() const override {
    return model_->range_shape();
  }
  std::string kind() const override { return "projected"; }
  int truncation() const { return n_; }
  const InputModel& model() const { return *model_; }

  GridSignal apply(const GridSignal& u) const override {
    check_domain(u);
    Eigen::Ref<const Eigen::MatrixXd> uh = model_->input_basis().matrix();
    GridSignal out(model_->mirrored_outputs().leftCols(n_) *
                   (uh.leftCols(n_).transpose() * u.values));
    out.shape = model_->range_shape();
    return out;
  }

  GridSignal adjoint_apply(const GridSignal& z) const override {
    check_range(z);
    Eigen::Ref<const Eigen::MatrixXd> uh = model_->input_basis().matrix();
    GridSignal out(uh.leftCols(n_) *
                   (model_->mirrored_outputs().leftCols(n_).transpose() * z.values));
    out.shape = model_->input_basis().shape();
    return out;
  }

 private:
  const InputModel* model_;
  int n_;
};

}  // namespace projreg
