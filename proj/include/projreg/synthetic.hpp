#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"

namespace projreg {

// Smooth synthetic images: a few random Gaussian bumps per image, peak
// scaled to 1.  Deterministic in the seed, so datasets are reproducible.
struct BlobOptions {
  int min_blobs = 2;
  int max_blobs = 6;
  double min_width = 0.06;  // blob std dev as a fraction of min(rows, cols)
  double max_width = 0.22;
  double min_amplitude = 0.3;
  double max_amplitude = 1.0;
};

inline GridSignal synth_blob_image(GridShape shape, unsigned seed,
                                   const BlobOptions& opt = {}) {
  if (shape.rows < 1 || shape.cols < 1) {
    throw ConfigError("synth_blob_image: empty shape");
  }
  if (opt.min_blobs < 1 || opt.max_blobs < opt.min_blobs) {
    throw ConfigError("synth_blob_image: invalid blob count range");
  }
  if (opt.min_width <= 0.0 || opt.max_width < opt.min_width ||
      opt.min_amplitude <= 0.0 || opt.max_amplitude < opt.min_amplitude) {
    throw ConfigError("synth_blob_image: invalid width/amplitude range");
  }

  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };

  const int count =
      opt.min_blobs +
      std::min(opt.max_blobs - opt.min_blobs,
               static_cast<int>(uniform() * (opt.max_blobs - opt.min_blobs + 1)));
  const double scale = static_cast<double>(std::min(shape.rows, shape.cols));

  Eigen::VectorXd values = Eigen::VectorXd::Zero(shape.pixels());
  for (int b = 0; b < count; ++b) {
    const double cx = (0.15 + 0.7 * uniform()) * (shape.cols - 1);
    const double cy = (0.15 + 0.7 * uniform()) * (shape.rows - 1);
    const double width =
        (opt.min_width + (opt.max_width - opt.min_width) * uniform()) * scale;
    const double amp =
        opt.min_amplitude + (opt.max_amplitude - opt.min_amplitude) * uniform();
    for (int r = 0; r < shape.rows; ++r) {
      for (int c = 0; c < shape.cols; ++c) {
        const double dx = c - cx, dy = r - cy;
        values[r * shape.cols + c] +=
            amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
      }
    }
  }
  const double peak = values.maxCoeff();
  values /= peak;  // count >= 1 and exp > 0, so peak > 0
  return GridSignal(std::move(values), shape);
}

inline std::vector<GridSignal> synth_blob_dataset(GridShape shape, int count,
                                                  unsigned seed,
                                                  const BlobOptions& opt = {}) {
  if (count < 1) throw ConfigError("synth_blob_dataset: count must be >= 1");
  std::vector<GridSignal> images;
  images.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    images.push_back(
        synth_blob_image(shape, seed + 1000003u * static_cast<unsigned>(i), opt));
  }
  return images;
}

}  // namespace projreg
