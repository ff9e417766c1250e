#pragma once

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stepfuse/ensemble.hpp"
#include "stepfuse/errors.hpp"
#include "stepfuse/io.hpp"
#include "stepfuse/metrics.hpp"
#include "stepfuse/schedule.hpp"
#include "stepfuse/trainer.hpp"

namespace stepfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string fixed(double value, int decimals) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, value);
  return buffer;
}

inline std::string general(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.10g", value);
  return buffer;
}

inline std::vector<std::string> sample_ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> ids(n);
  char buffer[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buffer, sizeof(buffer), "%06zu", i);
    ids[i] = prefix + buffer;
  }
  return ids;
}

/// Reorders `table` rows to follow `ids`; both must hold the same id set.
inline PredictionMatrix rows_in_order(const io::PredictionTable& table,
                                      std::span<const std::string> ids, const std::string& source) {
  if (table.ids.size() != ids.size()) {
    throw InvalidInput(source + ": has " + std::to_string(table.ids.size()) + " rows, expected " +
                       std::to_string(ids.size()));
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.ids.size(); ++i) index.emplace(table.ids[i], i);
  PredictionMatrix out{DenseMatrix(ids.size(), table.preds.cols(), 0.0), table.preds.score_type};
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const auto it = index.find(ids[r]);
    if (it == index.end()) throw InvalidInput(source + ": missing id '" + ids[r] + "'");
    const auto src = table.preds.values.row(it->second);
    std::copy(src.begin(), src.end(), out.values.row(r).begin());
  }
  return out;
}

inline void print_report(std::ostream& out, const MetricReport& report, bool as_json) {
  if (as_json) {
    nlohmann::ordered_json doc;
    doc["top1"] = report.top1;
    doc["top5"] = report.top5;
    doc["mca"] = report.mca;
    doc["map"] = report.map;
    doc["mauc"] = report.mauc;
    out << doc.dump(2) << '\n';
    return;
  }
  out << "metric\tvalue\n";
  out << "top1\t" << fixed(report.top1 * 100.0, 2) << '\n';
  out << "top5\t" << fixed(report.top5 * 100.0, 2) << '\n';
  out << "mca\t" << fixed(report.mca * 100.0, 2) << '\n';
  out << "map\t" << fixed(report.map * 100.0, 2) << '\n';
  out << "mauc\t" << fixed(report.mauc, 3) << '\n';
  out << "row\t" << format_report_row(report) << '\n';
}

struct TrainArgs {
  std::string config;
  std::string train_out;
  std::string val_out;
  std::string train_labels_out;
  std::string val_labels_out;
  std::int64_t seed = -1;
};

inline int cmd_train(const TrainArgs& args, std::ostream& out) {
  io::RunConfig cfg = io::read_run_config(args.config);
  if (args.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(args.seed);
  const auto& d = cfg.data;
  const auto train_set = synth_dataset(d.seed, d.n_train, d.dim, d.classes, d.separation);
  const auto val_set = synth_dataset(derive_seed(d.seed, 0x7A1), d.n_val, d.dim, d.classes, d.separation);

  const auto result = train(train_set, val_set, cfg.train);
  for (const auto& rec : result.log) {
    out << "epoch=" << rec.epoch << " lr=" << general(rec.lr) << " loss=" << fixed(rec.train_loss, 9)
        << " val_top1=" << fixed(rec.val_top1, 6) << '\n';
  }

  const auto train_ids = sample_ids("train-", train_set.size());
  const auto val_ids = sample_ids("val-", val_set.size());
  if (!args.train_out.empty()) io::write_predictions(args.train_out, train_ids, predict(result.model, train_set));
  if (!args.val_out.empty()) io::write_predictions(args.val_out, val_ids, predict(result.model, val_set));
  if (!args.train_labels_out.empty()) io::write_labels(args.train_labels_out, train_ids, train_set.labels);
  if (!args.val_labels_out.empty()) io::write_labels(args.val_labels_out, val_ids, val_set.labels);
  return kExitOk;
}

struct EvalArgs {
  std::string preds;
  std::string labels;
  std::string score_type = "prob";
  bool json = false;
};

inline int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const auto table = io::read_predictions(args.preds, parse_score_type(args.score_type));
  table.preds.validate();
  const auto labels = io::align_labels(table.ids, io::read_labels(args.labels), table.preds.cols());
  print_report(out, full_report(table.preds, labels), args.json);
  return kExitOk;
}

struct FuseArgs {
  std::string manifest;
  std::string out;
};

inline int cmd_fuse(const FuseArgs& args) {
  const auto manifest = io::read_manifest(args.manifest);
  std::vector<PredictionMatrix> members;
  std::vector<double> weights;
  std::vector<std::string> ids;
  for (const auto& member : manifest.members) {
    const auto table = io::read_predictions(member.path, manifest.score_type);
    table.preds.validate();
    if (ids.empty()) ids = table.ids;
    members.push_back(rows_in_order(table, ids, member.path.string()));
    weights.push_back(member.weight);
  }
  io::write_predictions(args.out, ids, fuse(members, weights));
  return kExitOk;
}

struct SweepArgs {
  std::vector<std::string> preds;
  std::string labels;
  std::size_t resolution = 20;
  std::string objective = "top1";
  std::string score_type = "prob";
  std::string emit_manifest;
  bool json = false;
};

inline int cmd_sweep(const SweepArgs& args, std::ostream& out) {
  const ScoreType score_type = parse_score_type(args.score_type);
  const Objective objective = parse_objective(args.objective);
  std::vector<PredictionMatrix> members;
  std::vector<std::string> ids;
  for (const auto& path : args.preds) {
    const auto table = io::read_predictions(path, score_type);
    table.preds.validate();
    if (ids.empty()) ids = table.ids;
    members.push_back(rows_in_order(table, ids, path));
  }
  const auto labels = io::align_labels(ids, io::read_labels(args.labels), members.front().cols());
  const auto best = sweep_weights(members, labels, args.resolution, objective);

  if (args.json) {
    nlohmann::ordered_json doc;
    doc["objective"] = to_string(objective);
    doc["resolution"] = args.resolution;
    doc["weights"] = best.weights;
    doc["score"] = best.score;
    out << doc.dump(2) << '\n';
  } else {
    out << "objective\t" << to_string(objective) << '\n';
    out << "weights\t";
    for (std::size_t k = 0; k < best.weights.size(); ++k) {
      out << (k ? "," : "") << general(best.weights[k]);
    }
    out << '\n' << "score\t" << fixed(best.score, 6) << '\n';
  }
  if (!args.emit_manifest.empty()) {
    std::vector<std::filesystem::path> paths(args.preds.begin(), args.preds.end());
    io::write_manifest(args.emit_manifest, paths, best.weights, score_type);
  }
  return kExitOk;
}

struct ScheduleArgs {
  double base_lr = 1e-4;
  std::vector<std::size_t> steps{0, 2, 4, 6, 8};
  std::vector<double> mults{1.0, 0.7, 0.5, 0.3, 0.1};
  std::size_t epochs = 10;
};

inline int cmd_schedule(const ScheduleArgs& args, std::ostream& out) {
  const StepDecaySchedule schedule(args.base_lr, args.steps, args.mults);
  for (const auto& row : schedule_table(schedule, args.epochs)) {
    out << row.epoch << '\t' << general(row.lr) << '\n';
  }
  return kExitOk;
}

}  // namespace detail

/// Entry point shared by the `stepfuse` binary and the tests:
///   stepfuse <train|eval|fuse|sweep|schedule> [--flag value ...]
/// Returns 0 on success and 2 on any usage, validation or I/O error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Loss, schedule, fusion and metric toolkit for staged classifier training",
               "stepfuse"};
  app.require_subcommand(1);

  detail::TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the reference model from a JSON run config");
  train_cmd->add_option("--config", train_args.config, "Run config (JSON)")->required();
  train_cmd->add_option("--train-out", train_args.train_out, "Prediction file for the train split");
  train_cmd->add_option("--val-out", train_args.val_out, "Prediction file for the val split");
  train_cmd->add_option("--train-labels-out", train_args.train_labels_out, "Label file for the train split");
  train_cmd->add_option("--val-labels-out", train_args.val_labels_out, "Label file for the val split");
  train_cmd->add_option("--seed", train_args.seed, "Override the model seed")->check(CLI::NonNegativeNumber);

  detail::EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Compute top-1/top-5/mCA/mAP/mAUC");
  eval_cmd->add_option("--preds", eval_args.preds, "Prediction file")->required();
  eval_cmd->add_option("--labels", eval_args.labels, "Label file")->required();
  eval_cmd->add_option("--score-type", eval_args.score_type, "prob or logit");
  eval_cmd->add_flag("--json", eval_args.json, "Machine-readable output");

  detail::FuseArgs fuse_args;
  auto* fuse_cmd = app.add_subcommand("fuse", "Weighted fusion of prediction files");
  fuse_cmd->add_option("--manifest", fuse_args.manifest, "Ensemble manifest (JSON)")->required();
  fuse_cmd->add_option("--out", fuse_args.out, "Fused prediction file")->required();

  detail::SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid-search fusion weights on the simplex");
  sweep_cmd->add_option("--preds", sweep_args.preds, "Member prediction files")->required()->expected(2, 5);
  sweep_cmd->add_option("--labels", sweep_args.labels, "Label file")->required();
  sweep_cmd->add_option("--resolution", sweep_args.resolution, "Grid resolution")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--objective", sweep_args.objective, "top1, top5, mca, map or mauc");
  sweep_cmd->add_option("--score-type", sweep_args.score_type, "prob or logit");
  sweep_cmd->add_option("--emit-manifest", sweep_args.emit_manifest, "Write the best weights as a manifest");
  sweep_cmd->add_flag("--json", sweep_args.json, "Machine-readable output");

  detail::ScheduleArgs schedule_args;
  auto* schedule_cmd = app.add_subcommand("schedule", "Print the step-decay learning-rate table");
  schedule_cmd->add_option("--base-lr", schedule_args.base_lr, "Base learning rate");
  schedule_cmd->add_option("--steps", schedule_args.steps, "Step epochs, comma separated")->delimiter(',');
  schedule_cmd->add_option("--mults", schedule_args.mults, "Multipliers, comma separated")->delimiter(',');
  schedule_cmd->add_option("--epochs", schedule_args.epochs, "Number of epochs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return detail::cmd_train(train_args, out);
    if (*eval_cmd) return detail::cmd_eval(eval_args, out);
    if (*fuse_cmd) return detail::cmd_fuse(fuse_args);
    if (*sweep_cmd) return detail::cmd_sweep(sweep_args, out);
    if (*schedule_cmd) return detail::cmd_schedule(schedule_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace stepfuse::cli
