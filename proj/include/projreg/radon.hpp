#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "projreg/operators.hpp"

namespace projreg {

// Parallel-beam discrete Radon transform on a rows x cols pixel grid.
//
// Pixels are unit squares centred on an integer lattice around the image
// centre; detector bins have unit spacing along the projection axis. The
// weight of pixel p in bin k at angle t is the exact integral of p's
// chord-length profile over bin k's interval, so each pixel distributes
// exactly its own mass across every view and the adjoint is the exact
// transpose of the stored weights.
class RadonOperator : public LinearOperator {
 public:
  static int default_detector_bins(int rows, int cols) {
    return int(std::ceil(std::sqrt(2.0) * std::max(rows, cols))) + 3;
  }

  RadonOperator(int rows, int cols, std::vector<double> angles,
                int detector_bins = -1)
      : rows_(rows),
        cols_(cols),
        angles_(std::move(angles)),
        bins_(detector_bins > 0 ? detector_bins
                                : default_detector_bins(rows, cols)) {
    if (rows_ < 1 || cols_ < 1) throw ConfigError("radon: empty grid");
    if (angles_.empty()) throw ConfigError("radon: no projection angles");
    build_weights();
  }

  Eigen::Index domain_dim() const override {
    return Eigen::Index(rows_) * cols_;
  }
  Eigen::Index range_dim() const override {
    return Eigen::Index(bins_) * Eigen::Index(angles_.size());
  }
  std::optional<GridShape> domain_shape() const override {
    return GridShape{rows_, cols_};
  }
  std::optional<GridShape> range_shape() const override {
    return GridShape{bins_, int(angles_.size())};
  }
  std::string kind() const override { return "radon"; }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int detector_bins() const { return bins_; }
  const std::vector<double>& angles() const { return angles_; }

  GridSignal apply(const GridSignal& u) const override {
    check_domain(u);
    GridSignal out = GridSignal::zeros(*range_shape());
    const int na = int(angles_.size());
    for (int a = 0; a < na; ++a) {
      for (const Entry& e : weights_[a]) {
        out.values[std::int64_t(e.bin) * na + a] += e.w * u.values[e.pixel];
      }
    }
    return out;
  }

  GridSignal adjoint_apply(const GridSignal& z) const override {
    check_range(z);
    GridSignal out = GridSignal::zeros(*domain_shape());
    const int na = int(angles_.size());
    for (int a = 0; a < na; ++a) {
      for (const Entry& e : weights_[a]) {
        out.values[e.pixel] += e.w * z.values[std::int64_t(e.bin) * na + a];
      }
    }
    return out;
  }

 private:
  struct Entry {
    std::int32_t pixel;
    std::int32_t bin;
    double w;
  };

  // Integral from -inf to s of the chord-length profile of a unit square
  // viewed along the given angle: a trapezoid with support [-h, h], plateau
  // [-p, p] and height hgt (total area 1).
  static double profile_cdf(double s, double h, double p, double hgt) {
    if (s <= -h) return 0.0;
    if (s >= h) return 1.0;
    const double ramp = h - p;
    if (ramp <= 1e-14) {
      return std::min(1.0, hgt * (s + h));
    }
    if (s <= -p) {
      const double d = s + h;
      return hgt * d * d / (2.0 * ramp);
    }
    if (s < p) {
      return hgt * ramp / 2.0 + hgt * (s + p);
    }
    const double d = h - s;
    return 1.0 - hgt * d * d / (2.0 * ramp);
  }

  void build_weights() {
    weights_.assign(angles_.size(), {});
    const double cx = (cols_ - 1) / 2.0;
    const double cy = (rows_ - 1) / 2.0;
    const double det_off = (bins_ - 1) / 2.0;

    for (size_t a = 0; a < angles_.size(); ++a) {
      const double wc = std::abs(std::cos(angles_[a]));
      const double ws = std::abs(std::sin(angles_[a]));
      const double h = (wc + ws) / 2.0;
      const double p = std::abs(wc - ws) / 2.0;
      const double hgt = 1.0 / std::max(wc, ws);
      const double c = std::cos(angles_[a]);
      const double s = std::sin(angles_[a]);

      auto& list = weights_[a];
      list.reserve(size_t(rows_) * cols_ * 3);
      for (int r = 0; r < rows_; ++r) {
        for (int col = 0; col < cols_; ++col) {
          const double x = col - cx;
          const double y = cy - r;
          const double tc = x * c + y * s;
          const int k_lo = std::max(0, int(std::ceil(tc - h - 0.5 + det_off)));
          const int k_hi =
              std::min(bins_ - 1, int(std::floor(tc + h + 0.5 + det_off)));
          const std::int32_t pixel = std::int32_t(r) * cols_ + col;
          for (int k = k_lo; k <= k_hi; ++k) {
            const double t_k = k - det_off;
            const double w = profile_cdf(t_k + 0.5 - tc, h, p, hgt) -
                             profile_cdf(t_k - 0.5 - tc, h, p, hgt);
            if (w > 0.0) list.push_back({pixel, std::int32_t(k), w});
          }
        }
      }
    }
  }

  int rows_, cols_;
  std::vector<double> angles_;
  int bins_;
  std::vector<std::vector<Entry>> weights_;
};

inline std::vector<double> uniform_angles(int count) {
  if (count < 1) throw ConfigError("uniform_angles: count must be >= 1");
  std::vector<double> a(static_cast<size_t>(count));
  const double pi = std::acos(-1.0);
  for (int i = 0; i < count; ++i) a[size_t(i)] = pi * i / count;
  return a;
}

}  // namespace projreg
