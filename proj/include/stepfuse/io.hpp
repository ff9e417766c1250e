#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepfuse/ensemble.hpp"
#include "stepfuse/errors.hpp"
#include "stepfuse/losses.hpp"
#include "stepfuse/metrics.hpp"
#include "stepfuse/schedule.hpp"
#include "stepfuse/trainer.hpp"

namespace stepfuse::io {

/// A prediction file: `id,c0,...,c{C-1}` header, then one row per sample.
struct PredictionTable {
  std::vector<std::string> ids;
  PredictionMatrix preds;
};

/// A label file: `id,label` header, then one row per sample.
struct LabelTable {
  std::vector<std::string> ids;
  std::vector<std::size_t> labels;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

inline double parse_real(std::string_view text, const std::string& source, std::size_t line) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw InvalidInput(where(source, line) + "cannot parse '" + std::string(text) + "' as a real");
  }
  return value;
}

inline std::size_t parse_index(std::string_view text, const std::string& source, std::size_t line) {
  std::size_t value = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw InvalidInput(where(source, line) + "cannot parse '" + std::string(text) +
                       "' as a class index");
  }
  return value;
}

inline bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

inline PredictionTable read_predictions(std::istream& in, const std::string& source,
                                        ScoreType score_type = ScoreType::prob) {
  std::string line;
  if (!detail::next_line(in, line)) throw InvalidInput(detail::where(source, 1) + "missing header");
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[0] != "id") {
    throw InvalidInput(detail::where(source, 1) + "header must be id,c0,...,c{C-1} with C >= 2");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != "c" + std::to_string(c - 1)) {
      throw InvalidInput(detail::where(source, 1) + "expected column 'c" + std::to_string(c - 1) +
                         "', got '" + std::string(header[c]) + "'");
    }
  }
  const std::size_t num_classes = header.size() - 1;

  PredictionTable table;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (detail::next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != header.size()) {
      throw InvalidInput(detail::where(source, line_no) + "expected " +
                         std::to_string(header.size()) + " columns, got " +
                         std::to_string(fields.size()));
    }
    std::string id(fields[0]);
    if (id.empty()) throw InvalidInput(detail::where(source, line_no) + "empty id");
    if (!seen.insert(id).second) {
      throw InvalidInput(detail::where(source, line_no) + "duplicate id '" + id + "'");
    }
    for (std::size_t c = 1; c < fields.size(); ++c) {
      values.push_back(detail::parse_real(fields[c], source, line_no));
    }
    table.ids.push_back(std::move(id));
  }
  if (table.ids.empty()) throw InvalidInput(source + ": no prediction rows");
  table.preds = PredictionMatrix{DenseMatrix(table.ids.size(), num_classes, std::move(values)), score_type};
  return table;
}

inline PredictionTable read_predictions(const std::filesystem::path& path,
                                        ScoreType score_type = ScoreType::prob) {
  auto in = detail::open_input(path);
  return read_predictions(in, path.string(), score_type);
}

/// Nine fixed decimals per value, LF line endings.
inline void write_predictions(std::ostream& out, std::span<const std::string> ids,
                              const PredictionMatrix& preds) {
  if (ids.size() != preds.rows()) {
    throw InvalidInput("write_predictions: " + std::to_string(ids.size()) + " ids for " +
                       std::to_string(preds.rows()) + " rows");
  }
  out << "id";
  for (std::size_t c = 0; c < preds.cols(); ++c) out << ",c" << c;
  out << '\n';
  char buffer[64];
  for (std::size_t r = 0; r < preds.rows(); ++r) {
    out << ids[r];
    for (double v : preds.values.row(r)) {
      // Avoid printing "-0.000000000" for tiny negative rounding residue.
      std::snprintf(buffer, sizeof(buffer), "%.9f", v == 0.0 ? 0.0 : v);
      out << ',' << (std::string_view(buffer) == "-0.000000000" ? "0.000000000" : buffer);
    }
    out << '\n';
  }
}

inline void write_predictions(const std::filesystem::path& path, std::span<const std::string> ids,
                              const PredictionMatrix& preds) {
  auto out = detail::open_output(path);
  write_predictions(out, ids, preds);
}

inline LabelTable read_labels(std::istream& in, const std::string& source) {
  std::string line;
  if (!detail::next_line(in, line) || line != "id,label") {
    throw InvalidInput(detail::where(source, 1) + "header must be id,label");
  }
  LabelTable table;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (detail::next_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != 2) {
      throw InvalidInput(detail::where(source, line_no) + "expected 2 columns, got " +
                         std::to_string(fields.size()));
    }
    std::string id(fields[0]);
    if (id.empty()) throw InvalidInput(detail::where(source, line_no) + "empty id");
    if (!seen.insert(id).second) {
      throw InvalidInput(detail::where(source, line_no) + "duplicate id '" + id + "'");
    }
    table.labels.push_back(detail::parse_index(fields[1], source, line_no));
    table.ids.push_back(std::move(id));
  }
  if (table.ids.empty()) throw InvalidInput(source + ": no label rows");
  return table;
}

inline LabelTable read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_labels(in, path.string());
}

inline void write_labels(std::ostream& out, std::span<const std::string> ids,
                         std::span<const std::size_t> labels) {
  if (ids.size() != labels.size()) throw InvalidInput("write_labels: ids and labels differ in length");
  out << "id,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
}

inline void write_labels(const std::filesystem::path& path, std::span<const std::string> ids,
                         std::span<const std::size_t> labels) {
  auto out = detail::open_output(path);
  write_labels(out, ids, labels);
}

/// Labels reordered to follow `ids`. The two id sets must match exactly and
/// every label must be below `num_classes`.
inline std::vector<std::size_t> align_labels(std::span<const std::string> ids,
                                             const LabelTable& table, std::size_t num_classes) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < table.ids.size(); ++i) by_id.emplace(table.ids[i], table.labels[i]);
  std::vector<std::size_t> aligned;
  aligned.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidInput("id '" + id + "' has no label");
    if (it->second >= num_classes) {
      throw InvalidInput("label " + std::to_string(it->second) + " of id '" + id +
                         "' out of range for " + std::to_string(num_classes) + " classes");
    }
    aligned.push_back(it->second);
  }
  if (table.ids.size() != ids.size()) {
    const std::unordered_set<std::string> wanted(ids.begin(), ids.end());
    for (const auto& id : table.ids) {
      if (!wanted.contains(id)) throw InvalidInput("label id '" + id + "' has no prediction");
    }
  }
  return aligned;
}

/// Parameters of the synthetic train/val splits.
struct DatasetSpec {
  std::size_t n_train = 600;
  std::size_t n_val = 300;
  std::size_t dim = 16;
  std::size_t classes = 8;
  double separation = 2.5;
  std::uint64_t seed = 1;
};

struct RunConfig {
  TrainConfig train;
  DatasetSpec data;
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput(std::string("config key '") + key + "' has the wrong type");
  }
}

inline std::size_t get_count(const nlohmann::json& doc, const char* key, std::size_t fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& value = doc.at(key);
  if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
    throw InvalidInput(std::string("config key '") + key + "' must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

}  // namespace detail

/// Reads a JSON run config. Missing keys take the fine-tuning defaults:
/// 10 epochs, base_lr 1e-4, steps [0,2,4,6,8], mults [1,0.7,0.5,0.3,0.1],
/// epsilon 0.06, gamma 0.3, per_class_sum, unfrozen backbone.
inline RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InvalidInput("run config must be a JSON object");
  RunConfig cfg;
  TrainConfig& t = cfg.train;
  t.epochs = detail::get_count(doc, "epochs", t.epochs);
  t.batch_size = detail::get_count(doc, "batch_size", t.batch_size);
  t.hidden_units = detail::get_count(doc, "hidden_units", t.hidden_units);
  const double base_lr = detail::get_or<double>(doc, "base_lr", t.schedule.base_lr());
  const auto steps = detail::get_or<std::vector<std::size_t>>(doc, "steps", t.schedule.step_epochs());
  const auto mults = detail::get_or<std::vector<double>>(doc, "mults", t.schedule.multipliers());
  t.schedule = StepDecaySchedule(base_lr, steps, mults);
  t.loss.epsilon = detail::get_or<double>(doc, "epsilon", t.loss.epsilon);
  t.loss.gamma = detail::get_or<double>(doc, "gamma", t.loss.gamma);
  t.loss.clamp_floor = detail::get_or<double>(doc, "clamp_floor", t.loss.clamp_floor);
  t.loss.form = parse_loss_form(detail::get_or<std::string>(doc, "loss_form", to_string(t.loss.form)));
  t.freeze = detail::get_or<bool>(doc, "freeze", false) ? FreezePolicy::frozen : FreezePolicy::unfrozen;
  t.seed = detail::get_or<std::uint64_t>(doc, "seed", t.seed);
  t.validate();

  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    if (!d.is_object()) throw InvalidInput("config key 'dataset' must be an object");
    DatasetSpec& s = cfg.data;
    s.n_train = detail::get_count(d, "n_train", s.n_train);
    s.n_val = detail::get_count(d, "n_val", s.n_val);
    s.dim = detail::get_count(d, "dim", s.dim);
    s.classes = detail::get_count(d, "classes", s.classes);
    s.separation = detail::get_or<double>(d, "separation", s.separation);
    s.seed = detail::get_or<std::uint64_t>(d, "seed", s.seed);
  }
  return cfg;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

struct ManifestMember {
  std::filesystem::path path;
  double weight = 0.0;
};

/// Fusion members with their weights. Relative member paths resolve against
/// the manifest file's directory.
struct EnsembleManifest {
  std::vector<ManifestMember> members;
  ScoreType score_type = ScoreType::prob;

  void validate() const {
    if (members.size() < 2) throw InvalidInput("manifest needs at least 2 members");
    std::vector<double> weights;
    for (const auto& m : members) weights.push_back(m.weight);
    validate_weights(weights);
  }
};

inline EnsembleManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object() || !doc.contains("members") || !doc.at("members").is_array()) {
    throw InvalidInput("manifest must be an object with a 'members' array");
  }
  EnsembleManifest manifest;
  manifest.score_type = parse_score_type(detail::get_or<std::string>(doc, "score_type", "prob"));
  for (const auto& entry : doc.at("members")) {
    if (!entry.is_object() || !entry.contains("path") || !entry.contains("weight")) {
      throw InvalidInput("manifest members need 'path' and 'weight'");
    }
    ManifestMember member;
    member.path = detail::get_or<std::string>(entry, "path", "");
    member.weight = detail::get_or<double>(entry, "weight", 0.0);
    if (member.path.is_relative()) member.path = base_dir / member.path;
    manifest.members.push_back(std::move(member));
  }
  manifest.validate();
  return manifest;
}

inline EnsembleManifest read_manifest(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  return parse_manifest(doc, path.parent_path());
}

/// Writes member paths relative to the manifest's own directory.
inline void write_manifest(const std::filesystem::path& path, std::span<const std::filesystem::path> members,
                           std::span<const double> weights, ScoreType score_type) {
  namespace fs = std::filesystem;
  const fs::path base = fs::absolute(path).parent_path();
  nlohmann::json doc;
  doc["score_type"] = to_string(score_type);
  doc["members"] = nlohmann::json::array();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const fs::path relative = fs::absolute(members[i]).lexically_normal().lexically_relative(base);
    doc["members"].push_back({{"path", relative.generic_string()}, {"weight", weights[i]}});
  }
  auto out = detail::open_output(path);
  out << doc.dump(2) << '\n';
}

}  // namespace stepfuse::io
