#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stepfuse/errors.hpp"
#include "stepfuse/numerics.hpp"

namespace stepfuse {

enum class ScoreType { prob, logit };

inline const char* to_string(ScoreType type) { return type == ScoreType::prob ? "prob" : "logit"; }

inline ScoreType parse_score_type(const std::string& name) {
  if (name == "prob") return ScoreType::prob;
  if (name == "logit") return ScoreType::logit;
  throw InvalidInput("score_type must be prob or logit, got '" + name + "'");
}

/// n x C class scores, one row per sample. Rows of a `prob` matrix are
/// distributions; `logit` rows are unnormalized scores.
struct PredictionMatrix {
  DenseMatrix values;
  ScoreType score_type = ScoreType::prob;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }

  void validate() const {
    if (values.empty()) throw InvalidInput("prediction matrix is empty");
    if (values.cols() < 2) throw InvalidInput("prediction matrix needs at least 2 classes");
    for (double v : values.data()) {
      if (!std::isfinite(v)) throw InvalidInput("prediction entries must be finite");
    }
    if (score_type == ScoreType::prob) {
      for (std::size_t r = 0; r < rows(); ++r) {
        const auto row = values.row(r);
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-6) {
          throw InvalidInput("probability row " + std::to_string(r) + " sums to " +
                             std::to_string(total));
        }
      }
    }
  }
};

namespace detail {

inline void check_labels(const PredictionMatrix& preds, std::span<const std::size_t> labels) {
  if (preds.values.empty() || labels.empty()) throw InvalidInput("metrics need at least one sample");
  if (labels.size() != preds.rows()) {
    throw InvalidInput(std::to_string(labels.size()) + " labels for " +
                       std::to_string(preds.rows()) + " prediction rows");
  }
  for (std::size_t label : labels) {
    if (label >= preds.cols()) {
      throw InvalidInput("label " + std::to_string(label) + " out of range for " +
                         std::to_string(preds.cols()) + " classes");
    }
  }
}

// Position of `target` in the row ranking; ties go to the lower class index.
inline std::size_t rank_in_row(std::span<const double> row, std::size_t target) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row[j] > row[target] || (row[j] == row[target] && j < target)) ++rank;
  }
  return rank;
}

inline std::vector<std::size_t> class_counts(std::span<const std::size_t> labels,
                                             std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t label : labels) ++counts[label];
  return counts;
}

}  // namespace detail

/// Fraction of rows whose true class ranks among the k highest scores.
inline double topk_accuracy(const PredictionMatrix& preds, std::span<const std::size_t> labels,
                            std::size_t k) {
  detail::check_labels(preds, labels);
  if (k < 1 || k > preds.cols()) {
    throw InvalidInput("k must be in [1, " + std::to_string(preds.cols()) + "], got " +
                       std::to_string(k));
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < preds.rows(); ++r) {
    if (detail::rank_in_row(preds.values.row(r), labels[r]) < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.rows());
}

/// Unweighted mean of per-class top-1 recall over classes that occur in `labels`.
inline double mean_class_accuracy(const PredictionMatrix& preds,
                                  std::span<const std::size_t> labels) {
  detail::check_labels(preds, labels);
  const std::size_t num_classes = preds.cols();
  const auto counts = detail::class_counts(labels, num_classes);
  std::vector<std::size_t> correct(num_classes, 0);
  for (std::size_t r = 0; r < preds.rows(); ++r) {
    if (detail::rank_in_row(preds.values.row(r), labels[r]) == 0) ++correct[labels[r]];
  }
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    total += static_cast<double>(correct[c]) / static_cast<double>(counts[c]);
    ++included;
  }
  return total / static_cast<double>(included);
}

/// One-vs-rest average precision of column `cls`: mean over positives of
/// precision at that positive's rank. Samples are ranked by score descending,
/// ties to the lower sample index.
inline double average_precision(const PredictionMatrix& preds, std::span<const std::size_t> labels,
                                std::size_t cls) {
  std::vector<std::size_t> order(preds.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds.values(a, cls) > preds.values(b, cls);
  });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] != cls) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) throw InvalidInput("average_precision: class " + std::to_string(cls) + " has no positives");
  return total / static_cast<double>(hits);
}

inline double mean_average_precision(const PredictionMatrix& preds,
                                     std::span<const std::size_t> labels) {
  detail::check_labels(preds, labels);
  const auto counts = detail::class_counts(labels, preds.cols());
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < preds.cols(); ++c) {
    if (counts[c] == 0) continue;
    total += average_precision(preds, labels, c);
    ++included;
  }
  return total / static_cast<double>(included);
}

/// One-vs-rest ROC AUC of column `cls` as the tie-aware Mann-Whitney statistic
/// (wins + ties / 2) / (P * N), computed from mid-ranks in O(n log n).
inline double roc_auc(const PredictionMatrix& preds, std::span<const std::size_t> labels,
                      std::size_t cls) {
  const std::size_t n = preds.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds.values(a, cls) < preds.values(b, cls);
  });

  // Twice the rank sum keeps mid-ranks integral.
  std::size_t doubled_rank_sum = 0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && preds.values(order[j + 1], cls) == preds.values(order[i], cls)) ++j;
    const std::size_t doubled_mid_rank = (i + 1) + (j + 1);
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == cls) {
        doubled_rank_sum += doubled_mid_rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidInput("roc_auc: class " + std::to_string(cls) +
                       " needs at least one positive and one negative");
  }
  const std::size_t doubled_u = doubled_rank_sum - positives * (positives + 1);
  return (0.5 * static_cast<double>(doubled_u)) /
         (static_cast<double>(positives) * static_cast<double>(negatives));
}

/// Unweighted mean of roc_auc over classes with both positives and negatives.
inline double mean_auc(const PredictionMatrix& preds, std::span<const std::size_t> labels) {
  detail::check_labels(preds, labels);
  const auto counts = detail::class_counts(labels, preds.cols());
  double total = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < preds.cols(); ++c) {
    if (counts[c] == 0 || counts[c] == preds.rows()) continue;
    total += roc_auc(preds, labels, c);
    ++included;
  }
  if (included == 0) throw InvalidInput("mean_auc: no class has both positives and negatives");
  return total / static_cast<double>(included);
}

/// All five metrics as fractions in [0, 1].
struct MetricReport {
  double top1 = 0.0;
  double top5 = 0.0;
  double mca = 0.0;
  double map = 0.0;
  double mauc = 0.0;
};

inline MetricReport full_report(const PredictionMatrix& preds, std::span<const std::size_t> labels) {
  MetricReport report;
  report.top1 = topk_accuracy(preds, labels, 1);
  report.top5 = topk_accuracy(preds, labels, std::min<std::size_t>(5, preds.cols()));
  report.mca = mean_class_accuracy(preds, labels);
  report.map = mean_average_precision(preds, labels);
  report.mauc = mean_auc(preds, labels);
  return report;
}

/// Leaderboard-style row: percentages to two decimals, mAUC as a fraction to
/// three, in the order top-1 / top-5 / mCA / mAP / mAUC.
inline std::string format_report_row(const MetricReport& report) {
  char buffer[128];
  std::snprintf(buffer, sizeof(buffer), "%.2f / %.2f / %.2f / %.2f / %.3f", report.top1 * 100.0,
                report.top5 * 100.0, report.mca * 100.0, report.map * 100.0, report.mauc);
  return buffer;
}

enum class Objective { top1, top5, mca, map, mauc };

inline Objective parse_objective(const std::string& name) {
  if (name == "top1") return Objective::top1;
  if (name == "top5") return Objective::top5;
  if (name == "mca") return Objective::mca;
  if (name == "map") return Objective::map;
  if (name == "mauc") return Objective::mauc;
  throw InvalidInput("objective must be one of top1, top5, mca, map, mauc; got '" + name + "'");
}

inline const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::top1: return "top1";
    case Objective::top5: return "top5";
    case Objective::mca: return "mca";
    case Objective::map: return "map";
    case Objective::mauc: return "mauc";
  }
  return "top1";
}

inline double evaluate(Objective objective, const PredictionMatrix& preds,
                       std::span<const std::size_t> labels) {
  switch (objective) {
    case Objective::top1: return topk_accuracy(preds, labels, 1);
    case Objective::top5:
      return topk_accuracy(preds, labels, std::min<std::size_t>(5, preds.cols()));
    case Objective::mca: return mean_class_accuracy(preds, labels);
    case Objective::map: return mean_average_precision(preds, labels);
    case Objective::mauc: return mean_auc(preds, labels);
  }
  throw InvalidInput("unknown objective");
}

}  // namespace stepfuse
