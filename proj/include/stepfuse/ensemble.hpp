#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stepfuse/errors.hpp"
#include "stepfuse/metrics.hpp"
#include "stepfuse/numerics.hpp"

namespace stepfuse {

/// Simplex membership: every weight >= 0 and the sum within 1e-9 of one.
inline void validate_weights(std::span<const double> weights) {
  if (weights.empty()) throw InvalidInput("fusion weights must not be empty");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidInput("fusion weights must be non-negative, got " + std::to_string(w));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidInput("fusion weights must sum to 1, got " + std::to_string(total));
  }
}

/// Converts logit rows to probabilities; probability matrices pass through.
inline PredictionMatrix to_probabilities(const PredictionMatrix& preds) {
  if (preds.score_type == ScoreType::prob) return preds;
  PredictionMatrix out{DenseMatrix(preds.rows(), preds.cols(), 0.0), ScoreType::prob};
  for (std::size_t r = 0; r < preds.rows(); ++r) {
    const auto p = softmax(preds.values.row(r));
    std::copy(p.begin(), p.end(), out.values.row(r).begin());
  }
  return out;
}

/// Weighted arithmetic mean of the members' probability rows.
///
/// Evaluated as x_ref + sum_k w_k (x_k - x_ref), anchored at the first member
/// with non-zero weight. This is the same convex combination, but a unit
/// weight vector returns its member bit-for-bit and identical members return
/// themselves bit-for-bit.
inline PredictionMatrix fuse(std::span<const PredictionMatrix> preds, std::span<const double> weights) {
  if (preds.empty()) throw InvalidInput("fuse: no prediction matrices");
  if (preds.size() != weights.size()) {
    throw InvalidInput("fuse: " + std::to_string(preds.size()) + " members but " +
                       std::to_string(weights.size()) + " weights");
  }
  validate_weights(weights);
  const std::size_t rows = preds.front().rows();
  const std::size_t cols = preds.front().cols();
  for (const auto& member : preds) {
    if (member.rows() != rows || member.cols() != cols) {
      throw InvalidInput("fuse: member shapes differ (" + std::to_string(member.rows()) + "x" +
                         std::to_string(member.cols()) + " vs " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ")");
    }
  }

  std::vector<PredictionMatrix> probs;
  probs.reserve(preds.size());
  for (const auto& member : preds) probs.push_back(to_probabilities(member));

  std::size_t anchor = 0;
  while (weights[anchor] == 0.0) ++anchor;

  PredictionMatrix out = probs[anchor];
  auto fused = out.values.data();
  const auto base = probs[anchor].values.data();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (k == anchor || weights[k] == 0.0) continue;
    const auto member = probs[k].values.data();
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += weights[k] * (member[i] - base[i]);
  }
  return out;
}

struct SweepResult {
  std::vector<double> weights;
  double score = 0.0;
};

/// Number of points {(k_1..k_m)/resolution : sum k_i = resolution}, i.e.
/// C(resolution + m - 1, m - 1). Saturates at `cap + 1`.
inline std::size_t simplex_grid_size(std::size_t members, std::size_t resolution, std::size_t cap) {
  double count = 1.0;
  for (std::size_t i = 1; i < members; ++i) {
    count = count * static_cast<double>(resolution + i) / static_cast<double>(i);
    if (count > static_cast<double>(cap)) return cap + 1;
  }
  return static_cast<std::size_t>(std::llround(count));
}

/// Exhaustive search over the simplex grid at the given resolution. Grid
/// points are visited in lexicographic order and only a strictly better score
/// replaces the incumbent, so ties resolve to the lexicographically smallest
/// weight vector.
inline SweepResult sweep_weights(std::span<const PredictionMatrix> preds,
                                 std::span<const std::size_t> labels, std::size_t resolution,
                                 Objective objective) {
  constexpr std::size_t kMaxMembers = 5;
  constexpr std::size_t kMaxGridPoints = 1'000'000;
  if (preds.size() < 2) throw InvalidInput("sweep_weights: need at least 2 members");
  if (preds.size() > kMaxMembers) {
    throw ResourceLimit("sweep_weights: at most " + std::to_string(kMaxMembers) + " members, got " +
                        std::to_string(preds.size()));
  }
  if (resolution < 1) throw InvalidInput("sweep_weights: resolution must be >= 1");
  if (simplex_grid_size(preds.size(), resolution, kMaxGridPoints) > kMaxGridPoints) {
    throw ResourceLimit("sweep_weights: weight grid exceeds " + std::to_string(kMaxGridPoints) +
                        " points");
  }

  const std::size_t m = preds.size();
  std::vector<std::size_t> counts(m, 0);
  std::vector<double> weights(m, 0.0);
  SweepResult best;
  bool have_best = false;

  // Lexicographic enumeration of compositions of `resolution` into m parts.
  auto visit = [&](auto&& self, std::size_t index, std::size_t remaining) -> void {
    if (index + 1 == m) {
      counts[index] = remaining;
      for (std::size_t k = 0; k < m; ++k) {
        weights[k] = static_cast<double>(counts[k]) / static_cast<double>(resolution);
      }
      const double score = evaluate(objective, fuse(preds, weights), labels);
      if (!have_best || score > best.score) {
        best.weights = weights;
        best.score = score;
        have_best = true;
      }
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      counts[index] = c;
      self(self, index + 1, remaining - c);
    }
  };
  visit(visit, 0, resolution);
  return best;
}

}  // namespace stepfuse
