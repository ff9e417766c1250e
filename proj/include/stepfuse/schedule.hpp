#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "stepfuse/errors.hpp"

namespace stepfuse {

/// Piecewise-constant learning rate: base_lr * multipliers[k] from step_epochs[k]
/// (inclusive) up to step_epochs[k + 1] (exclusive). The last multiplier
/// persists past the final step.
class StepDecaySchedule {
 public:
  StepDecaySchedule(double base_lr, std::vector<std::size_t> step_epochs,
                    std::vector<double> multipliers)
      : base_lr_(base_lr), steps_(std::move(step_epochs)), mults_(std::move(multipliers)) {
    if (!(base_lr_ > 0.0) || !std::isfinite(base_lr_)) {
      throw InvalidInput("base_lr must be positive, got " + std::to_string(base_lr_));
    }
    if (steps_.empty()) throw InvalidInput("steps must not be empty");
    if (steps_.size() != mults_.size()) {
      throw InvalidInput("steps and mults must have equal length, got " +
                         std::to_string(steps_.size()) + " and " + std::to_string(mults_.size()));
    }
    if (steps_.front() != 0) throw InvalidInput("steps must begin with epoch 0");
    for (std::size_t i = 1; i < steps_.size(); ++i) {
      if (steps_[i] <= steps_[i - 1]) throw InvalidInput("steps must be strictly ascending");
    }
    for (double m : mults_) {
      if (!(m > 0.0) || !std::isfinite(m)) {
        throw InvalidInput("mults must be positive, got " + std::to_string(m));
      }
    }
  }

  /// A single step at epoch 0 with multiplier 1.
  static StepDecaySchedule constant(double base_lr) { return {base_lr, {0}, {1.0}}; }

  /// Fine-tuning schedule: base 1e-4, multipliers 1, 0.7, 0.5, 0.3, 0.1 at
  /// epochs 0, 2, 4, 6, 8.
  static StepDecaySchedule fine_tune(double base_lr = 1e-4) {
    return {base_lr, {0, 2, 4, 6, 8}, {1.0, 0.7, 0.5, 0.3, 0.1}};
  }

  double base_lr() const { return base_lr_; }
  const std::vector<std::size_t>& step_epochs() const { return steps_; }
  const std::vector<double>& multipliers() const { return mults_; }

  double multiplier_at(std::size_t epoch) const {
    const auto it = std::upper_bound(steps_.begin(), steps_.end(), epoch);
    return mults_[static_cast<std::size_t>(it - steps_.begin()) - 1];
  }

 private:
  double base_lr_;
  std::vector<std::size_t> steps_;
  std::vector<double> mults_;
};

inline double lr_at(const StepDecaySchedule& schedule, std::size_t epoch) {
  return schedule.base_lr() * schedule.multiplier_at(epoch);
}

struct ScheduleRow {
  std::size_t epoch;
  double lr;
};

inline std::vector<ScheduleRow> schedule_table(const StepDecaySchedule& schedule,
                                               std::size_t num_epochs) {
  if (num_epochs == 0) throw InvalidInput("schedule_table: num_epochs must be >= 1");
  std::vector<ScheduleRow> rows;
  rows.reserve(num_epochs);
  for (std::size_t e = 0; e < num_epochs; ++e) rows.push_back({e, lr_at(schedule, e)});
  return rows;
}

/// Whole-run flag: a frozen backbone receives no update in any step.
enum class FreezePolicy { unfrozen, frozen };

}  // namespace stepfuse
