#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/orthobasis.hpp"
#include "projreg/projection.hpp"
#include "projreg/training.hpp"

namespace projreg {

// Minimum-norm reconstruction from adjoint training pairs (y_i, v_i = A* y_i).
// The outputs are orthonormalised exactly as in ProjectionModel and the same
// coefficients are mirrored onto the adjoint images, so vb_i = A* yb_i. A
// reconstruction solves the small Gram system
//   G c = ((y, yb_i))_i,  G_ij = (vb_i, vb_j),  u = sum_i c_i vb_i,
// which is the minimum-norm element consistent with the projected data.
class DualModel {
 public:
  void fit(const AdjointTrainingSet& pairs, double deptol = kDepTol) {
    if (pairs.outputs.size() != pairs.adjoint_images.size()) {
      throw DimensionError("dual fit: output/adjoint counts differ");
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
      fit_pair(pairs.outputs[i], pairs.adjoint_images[i], deptol);
    }
  }

  void fit_pair(const GridSignal& y, const GridSignal& v, double deptol = kDepTol) {
    require_finite(v, "adjoint image");
    const int global = pairs_seen_++;
    if (count_ > 0 && v.size() != vbar_.rows()) {
      throw DimensionError("dual fit: adjoint image length changed mid-stream");
    }

    ExtendOutcome out = mgs_extend(ybar_, y, deptol);
    if (!out.accepted()) {
      rejected_.push_back(global);
      return;
    }

    if (count_ == 0) {
      vbar_.resize(v.size(), 8);
      gram_.resize(8, 8);
      domain_shape_ = v.shape;
    }
    if (count_ == vbar_.cols()) {
      vbar_.conservativeResize(Eigen::NoChange, 2 * vbar_.cols());
      gram_.conservativeResize(2 * gram_.rows(), 2 * gram_.cols());
    }
    Eigen::VectorXd vb = v.values;
    if (count_ > 0) {
      Eigen::Map<const Eigen::VectorXd> c(out.rcolumn.data(), count_);
      vb.noalias() -= vbar_.leftCols(count_) * c;
    }
    vb /= out.residual_norm;
    vbar_.col(count_) = vb;

    Eigen::VectorXd g = vbar_.leftCols(count_ + 1).transpose() * vb;
    gram_.block(0, count_, count_ + 1, 1) = g;
    gram_.block(count_, 0, 1, count_ + 1) = g.transpose();
    ++count_;
    accepted_.push_back(global);

    if (count_ % kGramSentinelInterval == 0 &&
        latest_gram_deviation(ybar_) > kGramRefreshThreshold) {
      Eigen::MatrixXd e = householder_refresh(ybar_);
      Eigen::Ref<Eigen::MatrixXd> w = vbar_.leftCols(count_);
      apply_refresh_to_mirror(e, w);
      gram_.topLeftCorner(count_, count_) =
          vbar_.leftCols(count_).transpose() * vbar_.leftCols(count_);
    }
  }

  int size() const { return count_; }
  bool empty() const { return count_ == 0; }

  const OrthonormalBasis& output_basis() const { return ybar_; }
  const std::vector<double>& rdiag() const { return ybar_.rdiag(); }
  const std::vector<int>& accepted_indices() const { return accepted_; }
  const std::vector<int>& rejected_indices() const { return rejected_; }
  const std::optional<GridShape>& domain_shape() const { return domain_shape_; }

  Eigen::Ref<const Eigen::MatrixXd> transformed_adjoints() const {
    return vbar_.leftCols(count_);
  }
  GridSignal transformed_adjoint(int i) const {
    GridSignal v(vbar_.col(i));
    v.shape = domain_shape_;
    return v;
  }
  Eigen::Ref<const Eigen::MatrixXd> gram() const {
    return gram_.topLeftCorner(count_, count_);
  }

  GridSignal reconstruct(const GridSignal& y, int n = -1) const {
    if (n < 0) n = count_;
    if (n > count_) throw DimensionError("dual reconstruct: n exceeds model size");
    if (count_ == 0) throw NumericalError("dual reconstruct: empty model");
    if (y.size() != ybar_.dim()) {
      throw DimensionError("dual reconstruct: data length mismatch");
    }

    Eigen::Ref<const Eigen::MatrixXd> q = ybar_.matrix();
    Eigen::VectorXd b = q.leftCols(n).transpose() * y.values;
    Eigen::MatrixXd g = gram_.topLeftCorner(n, n);

    Eigen::LLT<Eigen::MatrixXd> llt(g);
    Eigen::VectorXd c;
    if (llt.info() == Eigen::Success) {
      c = llt.solve(b);
    } else {
      // Tiny diagonal lift for a numerically semidefinite block.
      const double jitter = 1e-12 * g.trace() / double(n);
      g.diagonal().array() += jitter;
      Eigen::LLT<Eigen::MatrixXd> retry(g);
      if (retry.info() != Eigen::Success) {
        throw NumericalError(
            "dual reconstruct: gram block is numerically singular at n = " +
            std::to_string(n));
      }
      c = retry.solve(b);
    }

    GridSignal out(vbar_.leftCols(n) * c);
    out.shape = domain_shape_;
    return out;
  }

  // Smallest singular value of the data-to-reconstruction map on the first n
  // pairs: sqrt of the smallest eigenvalue of the leading Gram block.
  double smallest_singular(int n) const {
    if (n < 1 || n > count_) throw DimensionError("smallest_singular: bad n");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        gram_.topLeftCorner(n, n), Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().minCoeff()));
  }

 private:
  friend struct detail::ModelSerde;

  OrthonormalBasis ybar_;
  Eigen::MatrixXd vbar_;
  Eigen::MatrixXd gram_;
  int count_ = 0;
  int pairs_seen_ = 0;
  std::vector<int> accepted_, rejected_;
  std::optional<GridShape> domain_shape_;
};

// Largest n whose noise amplification delta / mu_n stays below the threshold.
inline ChoiceResult choose_n_dual(const DualModel& model, double delta,
                                  double threshold = 1.0) {
  if (model.empty()) throw NumericalError("choose_n_dual: empty model");
  if (delta < 0.0) throw ConfigError("choose_n_dual: negative noise level");
  if (delta == 0.0) return {model.size(), false};

  ChoiceResult best{1, true};
  for (int n = 1; n <= model.size(); ++n) {
    if (delta / model.smallest_singular(n) <= threshold) {
      best.n = n;
      best.no_admissible = false;
    }
  }
  return best;
}

}  // namespace projreg
