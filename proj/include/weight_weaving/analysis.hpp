#pragma once

// Desk-side analysis: best-lambda histograms from externally measured
// accuracy tables, and lambda sweeps that emit one merged checkpoint per
// lambda for external evaluation.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "error.hpp"
#include "merge.hpp"
#include "task_vectors.hpp"
#include "weaving.hpp"

namespace ww {

struct AccuracyRow {
  std::string task;
  double lambda = 0.0;
  double accuracy = 0.0;
  std::size_t line = 0;  // 1-based source line, 0 when built in memory
};

struct AccuracyTable {
  std::vector<AccuracyRow> rows;
};

namespace detail {

// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

inline double parse_csv_number(std::string_view text, std::string_view column, std::size_t line_no) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ValidationError("line " + std::to_string(line_no) + ": bad " + std::string(column) + " value '" +
                          std::string(text) + "'");
  return v;
}

}  // namespace detail

// Parses `task,lambda,accuracy` CSV text. Accuracies may be fractions or
// percentages but must lie in [0, 100]. Errors carry 1-based line numbers.
inline AccuracyTable parse_accuracy_csv(std::string_view text) {
  AccuracyTable table;
  std::map<std::pair<std::string, double>, std::size_t> seen;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (eol == text.size()) break;
      continue;
    }
    auto fields = detail::split_csv_line(line, line_no);
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "task" || fields[1] != "lambda" || fields[2] != "accuracy")
        throw ValidationError("line " + std::to_string(line_no) + ": header must be 'task,lambda,accuracy'");
      header_seen = true;
      continue;
    }
    if (fields.size() != 3)
      throw ValidationError("line " + std::to_string(line_no) + ": expected 3 fields, got " +
                            std::to_string(fields.size()));
    if (fields[0].empty()) throw ValidationError("line " + std::to_string(line_no) + ": empty task name");
    AccuracyRow row{fields[0], detail::parse_csv_number(fields[1], "lambda", line_no),
                    detail::parse_csv_number(fields[2], "accuracy", line_no), line_no};
    if (row.accuracy < 0.0 || row.accuracy > 100.0)
      throw ValidationError("line " + std::to_string(line_no) + ": accuracy outside [0, 100]");
    auto [it, inserted] = seen.emplace(std::make_pair(row.task, row.lambda), line_no);
    if (!inserted)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate (task, lambda) = (" + row.task +
                            ", " + format_number(row.lambda) + "), first seen on line " +
                            std::to_string(it->second));
    table.rows.push_back(std::move(row));
    if (eol == text.size()) break;
  }
  if (!header_seen) throw ValidationError("accuracy CSV is empty");
  return table;
}

inline AccuracyTable read_accuracy_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_accuracy_csv(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

struct LambdaHistogram {
  std::map<double, std::size_t> bins;  // best lambda -> number of tasks
  std::size_t total = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json b = nlohmann::ordered_json::object();
    for (const auto& [lambda, count] : bins) b[format_number(lambda)] = count;
    nlohmann::ordered_json j;
    j["bins"] = b;
    j["total"] = total;
    return j;
  }
};

// Per task, the lambda with the highest accuracy (smallest lambda on ties),
// counted into bins.
inline LambdaHistogram best_lambda_histogram(const AccuracyTable& table) {
  if (table.rows.empty()) throw ValidationError("accuracy table has no rows");
  struct Best {
    double lambda;
    double accuracy;
  };
  std::map<std::string, Best> best;
  std::set<std::pair<std::string, double>> seen;
  for (const auto& row : table.rows) {
    if (!std::isfinite(row.lambda) || !std::isfinite(row.accuracy))
      throw ValidationError("non-finite value in accuracy table for task '" + row.task + "'");
    if (!seen.emplace(row.task, row.lambda).second)
      throw ValidationError((row.line ? "line " + std::to_string(row.line) + ": " : std::string()) +
                            "duplicate (task, lambda) = (" + row.task + ", " + format_number(row.lambda) + ")");
    auto [it, inserted] = best.try_emplace(row.task, Best{row.lambda, row.accuracy});
    if (inserted) continue;
    Best& b = it->second;
    if (row.accuracy > b.accuracy || (row.accuracy == b.accuracy && row.lambda < b.lambda))
      b = {row.lambda, row.accuracy};
  }
  LambdaHistogram h;
  for (const auto& [_, b] : best) ++h.bins[b.lambda];
  h.total = best.size();
  return h;
}

inline std::string sweep_file_name(std::string_view method, double lambda) {
  return std::string(method) + "_lambda" + format_number(lambda) + ".safetensors";
}

// Writes pretrained + f_merge(deltas, lambda) for every lambda in `space`,
// plus manifest.json. Returns the checkpoint paths in lambda order.
inline std::vector<std::filesystem::path> sweep_emit(const TensorMap& pretrained,
                                                     std::span<const TensorMap> finetuned,
                                                     const MergeSpec& spec_template, const SearchSpace& space,
                                                     const std::filesystem::path& out_dir,
                                                     const MergeRegistry& registry = builtin_registry()) {
  if (finetuned.empty()) throw ValidationError("sweep needs at least one fine-tuned checkpoint");
  const MergeMethod& method = registry.lookup(spec_template.method());
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  const auto deltas = compute_deltas(pretrained, finetuned);
  std::vector<std::filesystem::path> paths;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (double lambda : space.lambdas()) {
    const MergeSpec spec = spec_template.with_lambda(lambda);
    const TensorMap merged = add(pretrained, method(deltas, spec));
    const auto name = sweep_file_name(spec.method(), lambda);
    write_checkpoint(merged, out_dir / name);
    paths.push_back(out_dir / name);
    nlohmann::ordered_json entry;
    entry["lambda"] = lambda;
    entry["file"] = name;
    files.push_back(entry);
  }

  nlohmann::ordered_json manifest;
  manifest["method"] = spec_template.method();
  manifest["spec"] = spec_template.to_json();
  manifest["num_tasks"] = finetuned.size();
  manifest["files"] = files;
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("cannot write manifest in '" + out_dir.string() + "'");
  return paths;
}

}  // namespace ww
