#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepfuse/errors.hpp"
#include "stepfuse/losses.hpp"
#include "stepfuse/metrics.hpp"
#include "stepfuse/numerics.hpp"
#include "stepfuse/schedule.hpp"

namespace stepfuse {

struct FeatureDataset {
  DenseMatrix features;  // n x d
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (num_classes < 2) throw InvalidInput("dataset needs at least 2 classes");
    if (labels.empty() || features.rows() != labels.size()) {
      throw InvalidInput("dataset has " + std::to_string(features.rows()) + " feature rows and " +
                         std::to_string(labels.size()) + " labels");
    }
    for (std::size_t label : labels) {
      if (label >= num_classes) {
        throw InvalidInput("label " + std::to_string(label) + " out of range for " +
                           std::to_string(num_classes) + " classes");
      }
    }
  }
};

/// Gaussian blobs with unit covariance, one per class. Class k is centred at
/// `separation` times a unit direction: the k-th basis vector when C <= d,
/// otherwise a seeded random direction. Labels cycle 0..C-1 so class sizes
/// differ by at most one.
inline FeatureDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t dim,
                                    std::size_t num_classes, double separation) {
  if (num_classes < 2) throw InvalidInput("synth_dataset: need at least 2 classes");
  if (dim < 1) throw InvalidInput("synth_dataset: dim must be >= 1");
  if (n < num_classes) {
    throw InvalidInput("synth_dataset: n (" + std::to_string(n) + ") must be >= classes (" +
                       std::to_string(num_classes) + ")");
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw InvalidInput("synth_dataset: separation must be >= 0");
  }

  Rng rng(derive_seed(seed, 0xDA7A));
  DenseMatrix centres(num_classes, dim, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto centre = centres.row(k);
    if (num_classes <= dim) {
      centre[k] = separation;
      continue;
    }
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : centre) {
        v = rng.gaussian();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : centre) v *= separation / norm;
  }

  FeatureDataset data{DenseMatrix(n, dim, 0.0), std::vector<std::size_t>(n), num_classes};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % num_classes;
    data.labels[i] = label;
    auto row = data.features.row(i);
    const auto centre = centres.row(label);
    for (std::size_t j = 0; j < dim; ++j) row[j] = centre[j] + rng.gaussian();
  }
  return data;
}

/// Fixed random feature map followed by a trainable linear head:
///   p = softmax(head * relu(backbone * x) + bias)
struct BackboneHeadModel {
  DenseMatrix backbone;  // f x d
  DenseMatrix head;      // C x f
  std::vector<double> bias;

  std::size_t input_dim() const { return backbone.cols(); }
  std::size_t hidden_dim() const { return backbone.rows(); }
  std::size_t num_classes() const { return head.rows(); }
};

/// Backbone entries ~ N(0, (1/sqrt(d))^2); head and bias start at zero so the
/// untrained model predicts the uniform distribution.
inline BackboneHeadModel init_model(std::size_t input_dim, std::size_t hidden_dim,
                                    std::size_t num_classes, std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0) throw InvalidInput("init_model: dims must be positive");
  if (num_classes < 2) throw InvalidInput("init_model: need at least 2 classes");
  BackboneHeadModel model{DenseMatrix(hidden_dim, input_dim, 0.0),
                          DenseMatrix(num_classes, hidden_dim, 0.0),
                          std::vector<double>(num_classes, 0.0)};
  Rng rng(derive_seed(seed, 0xB0E));
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& v : model.backbone.data()) v = scale * rng.gaussian();
  return model;
}

namespace detail {

struct Activations {
  std::vector<double> pre;     // backbone * x
  std::vector<double> hidden;  // relu(pre)
  std::vector<double> logits;
};

inline Activations activations(const BackboneHeadModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw InvalidInput("forward: input has " + std::to_string(x.size()) +
                       " features, model expects " + std::to_string(model.input_dim()));
  }
  Activations act;
  act.pre = matvec(model.backbone, x);
  act.hidden.resize(act.pre.size());
  for (std::size_t i = 0; i < act.pre.size(); ++i) act.hidden[i] = act.pre[i] > 0.0 ? act.pre[i] : 0.0;
  act.logits = matvec(model.head, act.hidden);
  for (std::size_t c = 0; c < act.logits.size(); ++c) act.logits[c] += model.bias[c];
  return act;
}

}  // namespace detail

inline std::vector<double> forward(const BackboneHeadModel& model, std::span<const double> x) {
  return softmax(detail::activations(model, x).logits);
}

inline PredictionMatrix predict(const BackboneHeadModel& model, const FeatureDataset& data) {
  if (data.dim() != model.input_dim()) {
    throw InvalidInput("predict: dataset has " + std::to_string(data.dim()) +
                       " features, model expects " + std::to_string(model.input_dim()));
  }
  PredictionMatrix out{DenseMatrix(data.features.rows(), model.num_classes(), 0.0), ScoreType::prob};
  for (std::size_t r = 0; r < data.features.rows(); ++r) {
    const auto p = forward(model, data.features.row(r));
    std::copy(p.begin(), p.end(), out.values.row(r).begin());
  }
  return out;
}

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t hidden_units = 32;
  StepDecaySchedule schedule = StepDecaySchedule::fine_tune();
  LossConfig loss{};
  FreezePolicy freeze = FreezePolicy::unfrozen;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw InvalidInput("epochs must be >= 1");
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
    if (hidden_units < 1) throw InvalidInput("hidden_units must be >= 1");
    loss.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over the epoch's samples, evaluated before each step
  double val_top1 = 0.0;    // after the epoch's last step
};

using TrainLog = std::vector<EpochRecord>;

struct TrainResult {
  BackboneHeadModel model;
  TrainLog log;
};

/// Mini-batch gradient descent on the configured loss. The learning rate of
/// epoch e is lr_at(schedule, e); batch order is a permutation seeded by
/// (seed, epoch). A frozen backbone is never written. Unfrozen, backbone and
/// head share the learning rate and gradients are taken before any update.
inline TrainResult train(BackboneHeadModel model, const FeatureDataset& train_set,
                         const FeatureDataset& val_set, const TrainConfig& config) {
  config.validate();
  train_set.validate();
  val_set.validate();
  if (train_set.dim() != model.input_dim() || val_set.dim() != model.input_dim()) {
    throw InvalidInput("train: dataset feature dimension does not match the model");
  }
  if (train_set.num_classes != model.num_classes() || val_set.num_classes != model.num_classes()) {
    throw InvalidInput("train: dataset class count does not match the model");
  }

  const std::size_t n = train_set.size();
  const std::size_t hidden = model.hidden_dim();
  const std::size_t classes = model.num_classes();
  const std::size_t dim = model.input_dim();
  const bool update_backbone = config.freeze == FreezePolicy::unfrozen;

  DenseMatrix head_grad(classes, hidden, 0.0);
  std::vector<double> bias_grad(classes, 0.0);
  DenseMatrix backbone_grad(hidden, dim, 0.0);

  TrainLog log;
  log.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config.schedule, epoch);
    Rng shuffle(derive_seed(config.seed, 0x5EED0000ULL + epoch));
    const auto order = shuffle.permutation(n);

    double loss_total = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::fill(head_grad.data().begin(), head_grad.data().end(), 0.0);
      std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
      if (update_backbone) std::fill(backbone_grad.data().begin(), backbone_grad.data().end(), 0.0);

      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t sample = order[b];
        const auto x = train_set.features.row(sample);
        const std::size_t label = train_set.labels[sample];
        const auto act = detail::activations(model, x);
        loss_total += loss_value(softmax(act.logits), label, config.loss);
        const auto dlogits = loss_grad(act.logits, label, config.loss);

        for (std::size_t c = 0; c < classes; ++c) {
          auto grad_row = head_grad.row(c);
          for (std::size_t f = 0; f < hidden; ++f) grad_row[f] += dlogits[c] * act.hidden[f];
          bias_grad[c] += dlogits[c];
        }
        if (update_backbone) {
          for (std::size_t f = 0; f < hidden; ++f) {
            if (act.pre[f] <= 0.0) continue;
            double dhidden = 0.0;
            for (std::size_t c = 0; c < classes; ++c) dhidden += model.head(c, f) * dlogits[c];
            auto grad_row = backbone_grad.row(f);
            for (std::size_t j = 0; j < dim; ++j) grad_row[j] += dhidden * x[j];
          }
        }
      }

      const double step = lr / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < head_grad.data().size(); ++i) {
        model.head.data()[i] -= step * head_grad.data()[i];
      }
      for (std::size_t c = 0; c < classes; ++c) model.bias[c] -= step * bias_grad[c];
      if (update_backbone) {
        for (std::size_t i = 0; i < backbone_grad.data().size(); ++i) {
          model.backbone.data()[i] -= step * backbone_grad.data()[i];
        }
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_total / static_cast<double>(n);
    record.val_top1 = topk_accuracy(predict(model, val_set), val_set.labels, 1);
    log.push_back(record);
  }
  return {std::move(model), std::move(log)};
}

/// Trains a freshly initialized model (init_model with config.seed).
inline TrainResult train(const FeatureDataset& train_set, const FeatureDataset& val_set,
                         const TrainConfig& config) {
  config.validate();
  train_set.validate();
  return train(init_model(train_set.dim(), config.hidden_units, train_set.num_classes, config.seed),
               train_set, val_set, config);
}

}  // namespace stepfuse
