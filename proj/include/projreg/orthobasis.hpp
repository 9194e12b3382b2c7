#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"

namespace projreg {

// Default tolerances for the orthonormalisation routines.
inline constexpr double kDepTol = 1e-10;     // relative dependence threshold
inline constexpr double kOrthTol = 1e-8;     // acceptable Gram deviation
inline constexpr double kReorthFraction = 0.1;  // second-pass trigger
inline constexpr double kGramRefreshThreshold = 1e-6;
inline constexpr int kGramSentinelInterval = 64;

enum class ExtendStatus { accepted, rejected };

struct ExtendOutcome {
  ExtendStatus status = ExtendStatus::rejected;
  GridSignal q;                  // unit vector, set when accepted
  std::vector<double> rcolumn;   // prior-basis coefficients (+ residual norm when accepted)
  double residual_norm = 0.0;

  bool accepted() const { return status == ExtendStatus::accepted; }
};

// Growing orthonormal set with the triangular bookkeeping needed to map the
// original inputs back out of it: original_j = sum_{i<=j} rcols[j][i] * vector_i.
class OrthonormalBasis {
 public:
  OrthonormalBasis() = default;

  int size() const { return count_; }
  Eigen::Index dim() const { return dim_; }
  bool empty() const { return count_ == 0; }

  const std::optional<GridShape>& shape() const { return shape_; }
  void set_shape(std::optional<GridShape> s) { shape_ = std::move(s); }

  Eigen::Ref<const Eigen::VectorXd> col(int i) const { return storage_.col(i); }
  Eigen::Ref<const Eigen::MatrixXd> matrix() const {
    return storage_.leftCols(count_);
  }

  GridSignal vector(int i) const {
    GridSignal v(storage_.col(i));
    v.shape = shape_;
    return v;
  }

  const std::vector<double>& rdiag() const { return rdiag_; }
  const std::vector<std::vector<double>>& rcols() const { return rcols_; }

  void append(const Eigen::VectorXd& q, std::vector<double> rcolumn) {
    if (count_ == 0) {
      dim_ = q.size();
      storage_.resize(dim_, 8);
    } else if (q.size() != dim_) {
      throw DimensionError("basis vector length mismatch");
    }
    if (count_ == storage_.cols()) {
      storage_.conservativeResize(Eigen::NoChange, 2 * storage_.cols());
    }
    storage_.col(count_) = q;
    rdiag_.push_back(rcolumn.back());
    rcols_.push_back(std::move(rcolumn));
    ++count_;
  }

  // Replaces the stored vectors and triangular data after a refresh;
  // used internally, keeps count/dim unchanged.
  void overwrite(const Eigen::MatrixXd& q_new,
                 std::vector<std::vector<double>> rcols_new) {
    storage_.leftCols(count_) = q_new;
    rcols_ = std::move(rcols_new);
    for (int j = 0; j < count_; ++j) rdiag_[j] = rcols_[j].back();
  }

 private:
  Eigen::Index dim_ = 0;
  int count_ = 0;
  Eigen::MatrixXd storage_;
  std::vector<double> rdiag_;
  std::vector<std::vector<double>> rcols_;
  std::optional<GridShape> shape_;
};

// Orthogonalises `candidate` against `basis` (modified Gram-Schmidt, one
// re-orthogonalisation pass when cancellation ate more than a fixed fraction
// of the candidate). Accepted vectors are appended; near-dependent ones are
// rejected and the basis is left untouched.
inline ExtendOutcome mgs_extend(OrthonormalBasis& basis,
                                const GridSignal& candidate,
                                double deptol = kDepTol) {
  require_finite(candidate, "mgs_extend candidate");
  const double cand_norm = candidate.values.norm();
  if (cand_norm == 0.0) throw NumericalError("mgs_extend: zero candidate");
  if (!basis.empty() && candidate.size() != basis.dim()) {
    throw DimensionError("mgs_extend: candidate length " +
                         std::to_string(candidate.size()) +
                         " does not match basis dimension " +
                         std::to_string(basis.dim()));
  }

  const int k = basis.size();
  Eigen::VectorXd r = candidate.values;
  std::vector<double> coeffs(k, 0.0);
  for (int i = 0; i < k; ++i) {
    const double c = basis.col(i).dot(r);
    r.noalias() -= c * basis.col(i);
    coeffs[i] += c;
  }
  if (k > 0 && r.norm() < kReorthFraction * cand_norm) {
    for (int i = 0; i < k; ++i) {
      const double c = basis.col(i).dot(r);
      r.noalias() -= c * basis.col(i);
      coeffs[i] += c;
    }
  }

  ExtendOutcome out;
  out.residual_norm = r.norm();
  out.rcolumn = coeffs;
  if (out.residual_norm <= deptol * cand_norm) {
    out.status = ExtendStatus::rejected;
    return out;
  }

  out.status = ExtendStatus::accepted;
  out.rcolumn.push_back(out.residual_norm);
  Eigen::VectorXd q = r / out.residual_norm;
  if (basis.empty() && candidate.shape) basis.set_shape(candidate.shape);
  basis.append(q, out.rcolumn);
  out.q = GridSignal(std::move(q));
  out.q.shape = basis.shape();
  return out;
}

// Orthogonal projection onto the span of the first n basis vectors.
inline GridSignal project(const OrthonormalBasis& basis, const GridSignal& v,
                          int n = -1) {
  if (n < 0) n = basis.size();
  if (n > basis.size()) throw DimensionError("project: n exceeds basis size");
  if (basis.size() > 0 && v.size() != basis.dim()) {
    throw DimensionError("project: vector length mismatch");
  }
  GridSignal out = GridSignal::zeros(v.size());
  if (n > 0) {
    Eigen::Ref<const Eigen::MatrixXd> m = basis.matrix();
    out.values.noalias() = m.leftCols(n) * (m.leftCols(n).transpose() * v.values);
  }
  out.shape = v.shape ? v.shape : basis.shape();
  return out;
}

inline double residual_norm(const OrthonormalBasis& basis, const GridSignal& v,
                            int n = -1) {
  if (n < 0) n = basis.size();
  if (n > basis.size()) throw DimensionError("residual_norm: n exceeds basis size");
  if (n == 0) return v.values.norm();
  Eigen::Ref<const Eigen::MatrixXd> m = basis.matrix();
  return (v.values - m.leftCols(n) * (m.leftCols(n).transpose() * v.values)).norm();
}

// Largest entrywise deviation of Q^T Q from the identity.
inline double gram_deviation(const OrthonormalBasis& basis) {
  const int k = basis.size();
  if (k == 0) return 0.0;
  Eigen::MatrixXd g = basis.matrix().transpose() * basis.matrix();
  g.diagonal().array() -= 1.0;
  return g.cwiseAbs().maxCoeff();
}

// Inner products of the newest basis vector against all predecessors; a cheap
// drift sentinel for long incremental runs.
inline double latest_gram_deviation(const OrthonormalBasis& basis) {
  const int k = basis.size();
  if (k < 2) return 0.0;
  return (basis.matrix().leftCols(k - 1).transpose() * basis.col(k - 1))
      .cwiseAbs()
      .maxCoeff();
}

struct HouseholderResult {
  OrthonormalBasis basis;
  std::vector<int> dropped;  // indices of inputs found linearly dependent
};

namespace detail {

inline Eigen::MatrixXd rcols_as_matrix(const OrthonormalBasis& basis) {
  const int k = basis.size();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i <= j; ++i) r(i, j) = basis.rcols()[j][i];
  }
  return r;
}

inline std::vector<std::vector<double>> matrix_as_rcols(const Eigen::MatrixXd& r) {
  std::vector<std::vector<double>> cols(r.cols());
  for (int j = 0; j < r.cols(); ++j) {
    cols[j].assign(j + 1, 0.0);
    for (int i = 0; i <= j; ++i) cols[j][i] = r(i, j);
  }
  return cols;
}

}  // namespace detail

// Batch orthonormalisation through Householder QR. Dependent inputs are
// dropped (their indices reported) and the factorisation is redone on the
// survivors so the triangular data only covers retained columns.
inline HouseholderResult householder_orthonormalise(
    const std::vector<GridSignal>& inputs, double deptol = kDepTol) {
  if (inputs.empty()) throw NumericalError("householder_orthonormalise: no inputs");
  const Eigen::Index d = inputs[0].size();
  std::vector<double> col_norms(inputs.size());
  for (size_t j = 0; j < inputs.size(); ++j) {
    require_finite(inputs[j], "householder input");
    if (inputs[j].size() != d) throw DimensionError("input length mismatch");
    col_norms[j] = inputs[j].values.norm();
  }

  std::vector<int> retained(inputs.size());
  for (size_t j = 0; j < inputs.size(); ++j) retained[j] = int(j);
  std::vector<int> dropped;

  Eigen::MatrixXd thin_q, r;
  while (true) {
    Eigen::MatrixXd m(d, retained.size());
    for (size_t j = 0; j < retained.size(); ++j) m.col(j) = inputs[retained[j]].values;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::Index k = std::min<Eigen::Index>(d, retained.size());
    r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();

    std::vector<int> keep, drop_now;
    for (size_t j = 0; j < retained.size(); ++j) {
      const bool dependent = Eigen::Index(j) >= k ||
                             std::abs(r(j, j)) <= deptol * col_norms[retained[j]];
      (dependent ? drop_now : keep).push_back(retained[j]);
    }
    if (drop_now.empty()) {
      thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
      break;
    }
    dropped.insert(dropped.end(), drop_now.begin(), drop_now.end());
    if (keep.empty()) {
      throw NumericalError("householder_orthonormalise: all inputs dependent or zero");
    }
    retained = std::move(keep);
  }

  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    if (r(j, j) < 0) {
      r.row(j) = -r.row(j);
      thin_q.col(j) = -thin_q.col(j);
    }
  }

  HouseholderResult out;
  for (Eigen::Index j = 0; j < thin_q.cols(); ++j) {
    std::vector<double> rcol(j + 1);
    for (Eigen::Index i = 0; i <= j; ++i) rcol[i] = r(i, j);
    out.basis.append(thin_q.col(j), std::move(rcol));
  }
  for (const auto& in : inputs) {
    if (in.shape) {
      out.basis.set_shape(in.shape);
      break;
    }
  }
  std::sort(dropped.begin(), dropped.end());
  out.dropped = std::move(dropped);
  return out;
}

// Restores orthonormality of a drifted basis by re-factorising its own
// vectors. Returns the upper-triangular correction E (old = new * E) so any
// mirrored vector sets can be updated with the same change of coordinates.
inline Eigen::MatrixXd householder_refresh(OrthonormalBasis& basis) {
  const int k = basis.size();
  if (k == 0) return Eigen::MatrixXd::Zero(0, 0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis.matrix());
  Eigen::MatrixXd e = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::MatrixXd q_new = qr.householderQ() * Eigen::MatrixXd::Identity(basis.dim(), k);
  for (int j = 0; j < k; ++j) {
    if (e(j, j) < 0) {
      e.row(j) = -e.row(j);
      q_new.col(j) = -q_new.col(j);
    }
  }
  Eigen::MatrixXd r_new = e * detail::rcols_as_matrix(basis);
  basis.overwrite(q_new, detail::matrix_as_rcols(r_new));
  return e;
}

// Applies the inverse refresh correction to a mirrored column set:
// W_new = W * E^{-1}, matching vectors_new = vectors * E^{-1}.
inline void apply_refresh_to_mirror(const Eigen::MatrixXd& e,
                                    Eigen::Ref<Eigen::MatrixXd> w) {
  if (e.rows() == 0) return;
  w = e.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(w.eval());
}

}  // namespace projreg
