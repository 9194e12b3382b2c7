#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"

namespace projreg {

class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Eigen::Index domain_dim() const = 0;
  virtual Eigen::Index range_dim() const = 0;
  virtual GridSignal apply(const GridSignal& u) const = 0;
  virtual GridSignal adjoint_apply(const GridSignal& z) const = 0;
  virtual std::optional<GridShape> domain_shape() const { return {}; }
  virtual std::optional<GridShape> range_shape() const { return {}; }
  virtual std::string kind() const = 0;

 protected:
  void check_domain(const GridSignal& u) const {
    if (u.size() != domain_dim()) {
      throw DimensionError(kind() + ": domain length " + std::to_string(u.size()) +
                           ", expected " + std::to_string(domain_dim()));
    }
  }
  void check_range(const GridSignal& z) const {
    if (z.size() != range_dim()) {
      throw DimensionError(kind() + ": range length " + std::to_string(z.size()) +
                           ", expected " + std::to_string(range_dim()));
    }
  }
};

// Columns of the dense matrix are apply(e_j); oracle and small-instance path.
inline Eigen::MatrixXd materialise(const LinearOperator& op) {
  Eigen::MatrixXd m(op.range_dim(), op.domain_dim());
  GridSignal e = GridSignal::zeros(op.domain_dim());
  for (Eigen::Index j = 0; j < op.domain_dim(); ++j) {
    e.values[j] = 1.0;
    m.col(j) = op.apply(e).values;
    e.values[j] = 0.0;
  }
  return m;
}

class DenseOperator : public LinearOperator {
 public:
  explicit DenseOperator(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.size() == 0) throw ConfigError("dense operator: empty matrix");
  }

  Eigen::Index domain_dim() const override { return m_.cols(); }
  Eigen::Index range_dim() const override { return m_.rows(); }
  std::string kind() const override { return "dense"; }

  GridSignal apply(const GridSignal& u) const override {
    check_domain(u);
    return GridSignal(m_ * u.values);
  }
  GridSignal adjoint_apply(const GridSignal& z) const override {
    check_range(z);
    return GridSignal(m_.transpose() * z.values);
  }

  const Eigen::MatrixXd& matrix() const { return m_; }

 private:
  Eigen::MatrixXd m_;
};

// Injective compact-style operator on truncated sequence space:
//   (A u)_i = a_i u_i + b_i u_1,  b_1 = 0, b_i = 1/i,
//   a_i = 1/i for odd i, a_i = i^(-5/2) for even i   (1-based indices).
inline double seidman_diag(Eigen::Index i) {
  return (i % 2 == 1) ? 1.0 / static_cast<double>(i)
                      : std::pow(static_cast<double>(i), -2.5);
}
inline double seidman_coupling(Eigen::Index i) {
  return (i == 1) ? 0.0 : 1.0 / static_cast<double>(i);
}

class SeidmanOperator : public LinearOperator {
 public:
  explicit SeidmanOperator(Eigen::Index truncation) : n_(truncation) {
    if (n_ < 1) throw ConfigError("seidman operator: truncation must be >= 1");
    a_.resize(n_);
    b_.resize(n_);
    for (Eigen::Index k = 0; k < n_; ++k) {
      a_[k] = seidman_diag(k + 1);
      b_[k] = seidman_coupling(k + 1);
    }
  }

  Eigen::Index domain_dim() const override { return n_; }
  Eigen::Index range_dim() const override { return n_; }
  std::string kind() const override { return "seidman"; }

  GridSignal apply(const GridSignal& u) const override {
    check_domain(u);
    Eigen::VectorXd out = a_.cwiseProduct(u.values);
    out += u.values[0] * b_;
    return GridSignal(std::move(out));
  }

  GridSignal adjoint_apply(const GridSignal& z) const override {
    check_range(z);
    Eigen::VectorXd out = a_.cwiseProduct(z.values);
    out[0] += b_.dot(z.values);
    return GridSignal(std::move(out));
  }

  double diag_coefficient(Eigen::Index i) const { return a_[i]; }
  double coupling_coefficient(Eigen::Index i) const { return b_[i]; }

 private:
  Eigen::Index n_;
  Eigen::VectorXd a_, b_;
};

// Operator defined by an explicit singular system: A x_i = sigma_i z_i.
class SvdOperator : public LinearOperator {
 public:
  SvdOperator(Eigen::Index domain_dim, Eigen::Index range_dim,
              std::vector<double> sigma, Eigen::MatrixXd right_vectors,
              Eigen::MatrixXd left_vectors)
      : dn_(domain_dim),
        rn_(range_dim),
        sigma_(std::move(sigma)),
        x_(std::move(right_vectors)),
        z_(std::move(left_vectors)) {
    const Eigen::Index k = Eigen::Index(sigma_.size());
    if (x_.rows() != dn_ || z_.rows() != rn_ || x_.cols() != k || z_.cols() != k) {
      throw DimensionError("svd operator: vector block shapes inconsistent");
    }
    if (k == 0) throw ConfigError("svd operator: empty singular system");
    for (size_t i = 0; i < sigma_.size(); ++i) {
      if (!(sigma_[i] > 0.0)) throw NumericalError("svd operator: sigma must be positive");
      if (i > 0 && sigma_[i] > sigma_[i - 1] + 1e-15) {
        throw NumericalError("svd operator: sigma must be non-increasing");
      }
    }
    check_orthonormal(x_, "right");
    check_orthonormal(z_, "left");
    sv_ = Eigen::Map<const Eigen::VectorXd>(sigma_.data(), k);
  }

  Eigen::Index domain_dim() const override { return dn_; }
  Eigen::Index range_dim() const override { return rn_; }
  std::string kind() const override { return "svd"; }

  GridSignal apply(const GridSignal& u) const override {
    check_domain(u);
    return GridSignal(z_ * sv_.cwiseProduct(x_.transpose() * u.values));
  }
  GridSignal adjoint_apply(const GridSignal& z) const override {
    check_range(z);
    return GridSignal(x_ * sv_.cwiseProduct(z_.transpose() * z.values));
  }

  Eigen::Index count() const { return sv_.size(); }
  const std::vector<double>& sigma() const { return sigma_; }
  GridSignal right_vector(Eigen::Index i) const { return GridSignal(x_.col(i)); }
  GridSignal left_vector(Eigen::Index i) const { return GridSignal(z_.col(i)); }

 private:
  static void check_orthonormal(const Eigen::MatrixXd& m, const std::string& side) {
    Eigen::MatrixXd g = m.transpose() * m;
    g.diagonal().array() -= 1.0;
    if (g.cwiseAbs().maxCoeff() > 1e-8) {
      throw NumericalError("svd operator: " + side + " vectors not orthonormal");
    }
  }

  Eigen::Index dn_, rn_;
  std::vector<double> sigma_;
  Eigen::MatrixXd x_, z_;
  Eigen::VectorXd sv_;
};

// Diagonal singular system on canonical bases with sigma_i = i^(-p).
inline std::shared_ptr<SvdOperator> make_power_law_svd(Eigen::Index dim,
                                                       double exponent) {
  std::vector<double> sigma(static_cast<size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) sigma[size_t(i)] = std::pow(double(i + 1), -exponent);
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(dim, dim);
  return std::make_shared<SvdOperator>(dim, dim, std::move(sigma), id, id);
}

}  // namespace projreg
