#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/operators.hpp"

namespace projreg {

struct TrainingSet {
  std::vector<GridSignal> inputs;
  std::vector<GridSignal> outputs;
  bool normalised = false;
  std::string provenance;

  size_t size() const { return inputs.size(); }
};

struct AdjointTrainingSet {
  std::vector<GridSignal> outputs;
  std::vector<GridSignal> adjoint_images;  // adjoint_images[i] = A* outputs[i]
  std::string provenance;

  size_t size() const { return outputs.size(); }
};

inline void validate_training_set(const TrainingSet& ts) {
  if (ts.inputs.size() != ts.outputs.size()) {
    throw DimensionError("training set: input/output counts differ");
  }
  for (size_t i = 0; i < ts.size(); ++i) {
    require_finite(ts.inputs[i], "training input");
    require_finite(ts.outputs[i], "training output");
    if (ts.normalised && std::abs(norm(ts.inputs[i]) - 1.0) > 1e-12) {
      throw NumericalError("training set: input " + std::to_string(i) +
                           " is not unit-normalised");
    }
  }
}

// Applies the operator to (optionally unit-normalised) inputs. Appending more
// inputs later and refitting reproduces the earlier pairs bit for bit.
inline TrainingSet make_pairs(const LinearOperator& op,
                              const std::vector<GridSignal>& inputs,
                              bool normalise = true,
                              std::string provenance = "") {
  TrainingSet ts;
  ts.normalised = normalise;
  ts.provenance = std::move(provenance);
  ts.inputs.reserve(inputs.size());
  ts.outputs.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    GridSignal u = inputs[i];
    require_finite(u, "training input");
    if (normalise) {
      const double n = norm(u);
      if (n == 0.0) {
        throw NumericalError("make_pairs: input " + std::to_string(i) +
                             " has zero norm");
      }
      u = (1.0 / n) * u;
    }
    ts.outputs.push_back(op.apply(u));
    ts.inputs.push_back(std::move(u));
  }
  return ts;
}

inline AdjointTrainingSet make_adjoint_pairs(const LinearOperator& op,
                                             const std::vector<GridSignal>& outputs,
                                             std::string provenance = "") {
  AdjointTrainingSet as;
  as.provenance = std::move(provenance);
  as.outputs.reserve(outputs.size());
  as.adjoint_images.reserve(outputs.size());
  for (const auto& y : outputs) {
    require_finite(y, "training output");
    as.adjoint_images.push_back(op.adjoint_apply(y));
    as.outputs.push_back(y);
  }
  return as;
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

struct NoiseSpec {
  double delta = 0.0;
  enum class Mode { absolute, relative } mode = Mode::absolute;
  std::uint64_t seed = 0;
};

namespace detail {

// Gaussian draws built from explicit 53-bit uniforms so that streams are
// identical across standard library implementations.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double two_pi = 2.0 * std::acos(-1.0);
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return r * std::cos(two_pi * u2);
  }

 private:
  double uniform() { return double(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace detail

// Adds a Gaussian perturbation rescaled so that its norm is exactly delta
// (absolute) or delta * ||y|| (relative).
inline GridSignal add_noise(const GridSignal& y, const NoiseSpec& spec) {
  if (spec.delta < 0.0) throw ConfigError("noise level must be non-negative");
  if (spec.delta == 0.0) return y;

  const double target = spec.mode == NoiseSpec::Mode::absolute
                            ? spec.delta
                            : spec.delta * norm(y);
  if (target == 0.0) return y;

  detail::GaussianStream gauss(spec.seed);
  Eigen::VectorXd d(y.size());
  double nd = 0.0;
  do {
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = gauss.next();
    nd = d.norm();
  } while (nd == 0.0);

  GridSignal out = y;
  out.values += (target / nd) * d;
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic random split
// ---------------------------------------------------------------------------

struct TrainingSplit {
  TrainingSet train;
  TrainingSet validation;
};

inline TrainingSplit split_training(const TrainingSet& ts,
                                    size_t validation_count,
                                    std::uint64_t seed) {
  if (validation_count > ts.size()) {
    throw ConfigError("split: validation count exceeds dataset size");
  }
  std::vector<size_t> idx(ts.size());
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::mt19937_64 rng(seed);
  for (size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng() % i]);
  }
  std::vector<size_t> val(idx.begin(), idx.begin() + std::ptrdiff_t(validation_count));
  std::vector<size_t> train(idx.begin() + std::ptrdiff_t(validation_count), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  TrainingSplit out;
  out.train.normalised = out.validation.normalised = ts.normalised;
  out.train.provenance = out.validation.provenance = ts.provenance;
  for (size_t i : train) {
    out.train.inputs.push_back(ts.inputs[i]);
    out.train.outputs.push_back(ts.outputs[i]);
  }
  for (size_t i : val) {
    out.validation.inputs.push_back(ts.inputs[i]);
    out.validation.outputs.push_back(ts.outputs[i]);
  }
  return out;
}

}  // namespace projreg
