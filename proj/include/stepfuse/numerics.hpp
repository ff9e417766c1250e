#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stepfuse/errors.hpp"

namespace stepfuse {

/// Dense row-major matrix of doubles. Only the handful of operations the
/// trainer and metrics need; not a linear-algebra library.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
      throw InvalidInput("DenseMatrix: rows and cols must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
  }

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
      throw InvalidInput("DenseMatrix: rows and cols must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (data_.size() != rows * cols) {
      throw InvalidInput("DenseMatrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw InvalidInput("DenseMatrix: entries must be finite");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y = A x
inline std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) {
    throw InvalidInput("matvec: vector length " + std::to_string(x.size()) +
                       " does not match matrix cols " + std::to_string(a.cols()));
  }
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

/// Numerically stable softmax (max-subtraction). Requires at least two finite logits.
inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw InvalidInput("softmax: need at least 2 logits, got " + std::to_string(logits.size()));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInput("softmax: logits must be finite");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

/// Checks the probability-vector contract: length >= 2, entries in [0,1],
/// sum within `tolerance` of one.
inline void validate_probabilities(std::span<const double> p, double tolerance = 1e-9) {
  if (p.size() < 2) {
    throw InvalidInput("probability vector needs at least 2 entries, got " +
                       std::to_string(p.size()));
  }
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidInput("probability entries must lie in [0, 1], got " + std::to_string(v));
    }
    total += v;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw InvalidInput("probabilities must sum to 1, got " + std::to_string(total));
  }
}

/// SplitMix64 finalizer. Used to derive independent child seeds from a run seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream));
}

/// Seeded generator: MT19937-64 for raw bits, uniforms from the top 53 bits,
/// Gaussians via Box-Muller. Every step is defined here rather than through
/// <random> distributions, whose output is implementation-specific.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = engine_();
    while (draw >= limit) draw = engine_();
    return draw % bound;
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(order[i - 1], order[j]);
    }
    return order;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<double> gaussian_sample(std::uint64_t seed, std::size_t n) {
  if (n == 0) throw InvalidInput("gaussian_sample: n must be >= 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = rng.gaussian();
  return out;
}

}  // namespace stepfuse
