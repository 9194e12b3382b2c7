#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "projreg/errors.hpp"

namespace projreg {

struct GridShape {
  int rows = 0;
  int cols = 0;

  std::int64_t pixels() const { return std::int64_t(rows) * cols; }
  bool operator==(const GridShape& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

// Dense real vector, optionally tagged with a rows x cols grid layout so
// signals that represent images keep their geometry through the pipeline.
struct GridSignal {
  Eigen::VectorXd values;
  std::optional<GridShape> shape;

  GridSignal() = default;
  explicit GridSignal(Eigen::VectorXd v) : values(std::move(v)) {}
  GridSignal(Eigen::VectorXd v, GridShape s) : values(std::move(v)), shape(s) {
    if (shape->pixels() != values.size()) {
      throw DimensionError("grid shape " + std::to_string(s.rows) + "x" +
                           std::to_string(s.cols) + " does not match length " +
                           std::to_string(values.size()));
    }
  }

  static GridSignal zeros(Eigen::Index n) {
    return GridSignal(Eigen::VectorXd::Zero(n));
  }
  static GridSignal zeros(GridShape s) {
    return GridSignal(Eigen::VectorXd::Zero(s.pixels()), s);
  }

  Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index i) const { return values[i]; }
  double& operator[](Eigen::Index i) { return values[i]; }

  double at(int r, int c) const { return values[std::int64_t(r) * shape->cols + c]; }
  double& at(int r, int c) { return values[std::int64_t(r) * shape->cols + c]; }

  bool all_finite() const { return values.allFinite(); }
};

inline void require_finite(const GridSignal& v, const std::string& what) {
  if (!v.all_finite()) throw NumericalError(what + " contains non-finite entries");
}

inline void require_same_size(const GridSignal& a, const GridSignal& b) {
  if (a.size() != b.size()) {
    throw DimensionError("vector lengths differ: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

// Euclidean inner product; the summation order is fixed so results are
// reproducible run to run.
inline double inner(const GridSignal& a, const GridSignal& b) {
  require_same_size(a, b);
  return a.values.dot(b.values);
}

inline double norm(const GridSignal& v) { return v.values.norm(); }

inline GridSignal operator+(const GridSignal& a, const GridSignal& b) {
  require_same_size(a, b);
  GridSignal out(a.values + b.values);
  out.shape = a.shape ? a.shape : b.shape;
  return out;
}

inline GridSignal operator-(const GridSignal& a, const GridSignal& b) {
  require_same_size(a, b);
  GridSignal out(a.values - b.values);
  out.shape = a.shape ? a.shape : b.shape;
  return out;
}

inline GridSignal operator*(double s, const GridSignal& v) {
  GridSignal out(s * v.values);
  out.shape = v.shape;
  return out;
}

}  // namespace projreg
