#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stepfuse/errors.hpp"
#include "stepfuse/numerics.hpp"

namespace stepfuse {

/// Which terms of the cross-entropy family enter the loss.
///   per_class_sum: target term plus a -log(1 - p_i) term for every other class.
///   target_only:   only the target term (standard categorical cross-entropy).
enum class LossForm { per_class_sum, target_only };

inline const char* to_string(LossForm form) {
  return form == LossForm::per_class_sum ? "per_class_sum" : "target_only";
}

inline LossForm parse_loss_form(const std::string& name) {
  if (name == "per_class_sum") return LossForm::per_class_sum;
  if (name == "target_only") return LossForm::target_only;
  throw InvalidInput("loss_form must be per_class_sum or target_only, got '" + name + "'");
}

/// Label-smoothing mass, focal exponent, loss form and log clamp.
/// Defaults are the fine-tuning values (epsilon 0.06, gamma 0.3).
struct LossConfig {
  double epsilon = 0.06;
  double gamma = 0.3;
  LossForm form = LossForm::per_class_sum;
  double clamp_floor = 1e-12;

  /// Plain cross-entropy: no smoothing, no focal modulation.
  static LossConfig cross_entropy(LossForm form = LossForm::target_only) {
    return LossConfig{0.0, 0.0, form, 1e-12};
  }

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) {
      throw InvalidInput("epsilon must be in [0, 1), got " + std::to_string(epsilon));
    }
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
      throw InvalidInput("gamma must be >= 0, got " + std::to_string(gamma));
    }
    if (!(clamp_floor > 0.0 && clamp_floor <= 1e-6)) {
      throw InvalidInput("clamp_floor must be in (0, 1e-6], got " + std::to_string(clamp_floor));
    }
  }
};

/// Smoothed target: 1 - epsilon on the true class, epsilon / (C - 1) elsewhere.
/// epsilon = 0 gives the one-hot label.
inline std::vector<double> smooth_labels(std::size_t true_class, std::size_t num_classes,
                                         double epsilon) {
  if (num_classes < 2) {
    throw InvalidInput("smooth_labels: need at least 2 classes, got " +
                       std::to_string(num_classes));
  }
  if (true_class >= num_classes) {
    throw IndexError("smooth_labels: class " + std::to_string(true_class) +
                     " out of range for " + std::to_string(num_classes) + " classes");
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw InvalidInput("epsilon must be in [0, 1), got " + std::to_string(epsilon));
  }
  std::vector<double> y(num_classes, epsilon / static_cast<double>(num_classes - 1));
  y[true_class] = 1.0 - epsilon;
  return y;
}

namespace detail {

// Weight on each non-target -log(1 - p_i) term. Smoothed labels put
// eps/(C-1) there; unsmoothed (eps = 0) labels keep the full complement term
// of the plain per-class cross-entropy, weight 1.
inline double other_class_weight(double epsilon, std::size_t num_classes) {
  return epsilon > 0.0 ? epsilon / static_cast<double>(num_classes - 1) : 1.0;
}

inline void check_class(std::size_t true_class, std::size_t num_classes) {
  if (true_class >= num_classes) {
    throw IndexError("class " + std::to_string(true_class) + " out of range for " +
                     std::to_string(num_classes) + " classes");
  }
}

inline double clamp_probability(double p, double floor) {
  return std::clamp(p, floor, 1.0 - floor);
}

// Target term: -(1 - q)^gamma * (1 - eps) * log q
inline double target_term(double q, double weight, double gamma) {
  return -std::pow(1.0 - q, gamma) * weight * std::log(q);
}

// Non-target term: -q^gamma * w * log(1 - q)
inline double other_term(double q, double weight, double gamma) {
  return -std::pow(q, gamma) * weight * std::log1p(-q);
}

// q * d(term)/dq, i.e. the derivative with respect to log q.
inline double target_term_dlog(double q, double weight, double gamma) {
  const double focal = std::pow(1.0 - q, gamma);
  double value = -focal;
  if (gamma != 0.0) value += gamma * q * std::log(q) * focal / (1.0 - q);
  return weight * value;
}

inline double other_term_dlog(double q, double weight, double gamma) {
  double value = std::pow(q, gamma) * q / (1.0 - q);
  if (gamma != 0.0) value -= gamma * std::pow(q, gamma) * std::log1p(-q);
  return weight * value;
}

}  // namespace detail

/// Loss of one sample in nats. Probabilities are clamped into
/// [clamp_floor, 1 - clamp_floor] before any logarithm.
///
/// For the true class c the term is -(1-p_c)^gamma (1-eps) log p_c; every other
/// class i contributes -p_i^gamma w log(1-p_i) when form is per_class_sum, with
/// w = eps/(C-1) for eps > 0 and w = 1 for eps = 0. gamma = 0 removes focal
/// modulation.
inline double loss_value(std::span<const double> p, std::size_t true_class,
                         const LossConfig& config) {
  config.validate();
  validate_probabilities(p);
  detail::check_class(true_class, p.size());

  const std::size_t num_classes = p.size();
  const double target_weight = 1.0 - config.epsilon;
  const double other_weight = detail::other_class_weight(config.epsilon, num_classes);

  double total = detail::target_term(detail::clamp_probability(p[true_class], config.clamp_floor),
                                     target_weight, config.gamma);
  if (config.form == LossForm::per_class_sum) {
    for (std::size_t i = 0; i < num_classes; ++i) {
      if (i == true_class) continue;
      total += detail::other_term(detail::clamp_probability(p[i], config.clamp_floor),
                                  other_weight, config.gamma);
    }
  }
  return total;
}

/// Gradient of loss_value(softmax(logits)) with respect to the logits.
///
/// Uses dp_i/dz_j = p_i (delta_ij - p_j), so with h_i = dL/dlog p_i the
/// gradient is h_j - p_j * sum_i h_i. The clamp passes gradients straight
/// through, which keeps (p - onehot) exact for plain cross-entropy even when
/// p_c underflows the floor.
inline std::vector<double> loss_grad(std::span<const double> logits, std::size_t true_class,
                                     const LossConfig& config) {
  config.validate();
  const std::vector<double> p = softmax(logits);
  detail::check_class(true_class, p.size());

  const std::size_t num_classes = p.size();
  const double target_weight = 1.0 - config.epsilon;
  const double other_weight = detail::other_class_weight(config.epsilon, num_classes);

  std::vector<double> h(num_classes, 0.0);
  h[true_class] = detail::target_term_dlog(
      detail::clamp_probability(p[true_class], config.clamp_floor), target_weight, config.gamma);
  if (config.form == LossForm::per_class_sum) {
    for (std::size_t i = 0; i < num_classes; ++i) {
      if (i == true_class) continue;
      h[i] = detail::other_term_dlog(detail::clamp_probability(p[i], config.clamp_floor),
                                     other_weight, config.gamma);
    }
  }

  double h_total = 0.0;
  for (double v : h) h_total += v;
  std::vector<double> grad(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) grad[j] = h[j] - p[j] * h_total;
  return grad;
}

/// Batch loss: arithmetic mean of per-sample losses over the rows of `probs`.
inline double mean_loss(const DenseMatrix& probs, std::span<const std::size_t> labels,
                        const LossConfig& config) {
  if (labels.size() != probs.rows()) {
    throw InvalidInput("mean_loss: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(probs.rows()) + " rows");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) total += loss_value(probs.row(r), labels[r], config);
  return total / static_cast<double>(probs.rows());
}

}  // namespace stepfuse
