// wweave: command-line front end for the weight_weaving library.
//
// Exit codes: 0 success, 1 runtime or I/O error, 2 usage/validation error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "weight_weaving/weight_weaving.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };
LogLevel g_log_level = LogLevel::info;

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_log_level) std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

// Options shared by the subcommands that merge checkpoints. Every field
// may also come from --config; explicit flags win.
struct MergeArgs {
  std::string method;
  double lambda = 1.0;
  ww::MergeParams params;
  std::uint64_t seed = 0;
  std::string pretrained;
  std::vector<std::string> finetuned;
  std::string config;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string dtype = "f32";

  // weave / sweep
  std::string pooling = "avg";
  std::string lambda_range;
  bool include_deltas = true;
};

struct Options {
  CLI::Option* method = nullptr;
  CLI::Option* lambda = nullptr;
  CLI::Option* drop_rate = nullptr;
  CLI::Option* keep_fraction = nullptr;
  CLI::Option* beta = nullptr;
  CLI::Option* gamma = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* threads = nullptr;
  CLI::Option* pooling = nullptr;
  CLI::Option* lambda_range = nullptr;
  CLI::Option* include_deltas = nullptr;
};

bool given(const CLI::Option* opt) { return opt && opt->count() > 0; }

void add_inputs(CLI::App* cmd, MergeArgs& a) {
  cmd->add_option("--pretrained", a.pretrained, "Pre-trained checkpoint")->required();
  cmd->add_option("--finetuned", a.finetuned, "Fine-tuned checkpoints, in task order")->required();
}

Options add_merge_flags(CLI::App* cmd, MergeArgs& a, bool with_lambda) {
  Options o;
  o.method = cmd->add_option("--method", a.method, "Merge method (task_arithmetic, dare, ties, breadcrumbs, magmax)");
  if (with_lambda) o.lambda = cmd->add_option("--lambda", a.lambda, "Scaling factor");
  o.drop_rate = cmd->add_option("--drop-rate", a.params.drop_rate, "DARE drop rate p");
  o.keep_fraction = cmd->add_option("--keep-fraction", a.params.keep_fraction, "TIES keep fraction k");
  o.beta = cmd->add_option("--beta", a.params.beta, "Breadcrumbs smallest-magnitude fraction");
  o.gamma = cmd->add_option("--gamma", a.params.gamma, "Breadcrumbs largest-magnitude fraction");
  o.seed = cmd->add_option("--seed", a.seed, "Seed for DARE masks and random pooling");
  o.threads = cmd->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--config", a.config, "JSON config file; explicit flags take precedence");
  cmd->add_option("--dtype", a.dtype, "Output dtype policy")->check(CLI::IsMember({"f32", "keep"}));
  return o;
}

// Fills every option not given on the command line from the config file.
void apply_config(MergeArgs& a, const Options& o) {
  if (a.config.empty()) return;
  std::ifstream in(a.config);
  if (!in) throw ww::IoError("cannot open config '" + a.config + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ww::ValidationError("config '" + a.config + "': " + e.what());
  }
  if (!cfg.is_object()) throw ww::ValidationError("config '" + a.config + "' must be a JSON object");
  try {
    for (const auto& [key, value] : cfg.items()) {
      if (key == "method") { if (!given(o.method)) a.method = value.get<std::string>(); }
      else if (key == "lambda") { if (o.lambda && !given(o.lambda)) a.lambda = value.get<double>(); }
      else if (key == "drop_rate") { if (!given(o.drop_rate)) a.params.drop_rate = value.get<double>(); }
      else if (key == "keep_fraction") { if (!given(o.keep_fraction)) a.params.keep_fraction = value.get<double>(); }
      else if (key == "beta") { if (!given(o.beta)) a.params.beta = value.get<double>(); }
      else if (key == "gamma") { if (!given(o.gamma)) a.params.gamma = value.get<double>(); }
      else if (key == "seed") { if (!given(o.seed)) a.seed = value.get<std::uint64_t>(); }
      else if (key == "threads") { if (!given(o.threads)) a.threads = value.get<unsigned>(); }
      else if (key == "pooling") { if (o.pooling && !given(o.pooling)) a.pooling = value.get<std::string>(); }
      else if (key == "include_deltas") {
        if (o.include_deltas && !given(o.include_deltas)) a.include_deltas = value.get<bool>();
      } else if (key == "lambda_range") {
        if (o.lambda_range && !given(o.lambda_range))
          a.lambda_range = value.is_string() ? value.get<std::string>() : value.dump();
      } else {
        throw ww::ValidationError("config '" + a.config + "': unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ww::ValidationError("config '" + a.config + "': " + e.what());
  }
}

ww::MergeSpec make_spec(const MergeArgs& a) {
  if (a.method.empty()) throw ww::ValidationError("--method is required");
  ww::registry_lookup(a.method);  // unknown method -> validation error listing the registry
  return ww::MergeSpec(a.method, a.lambda, a.params, a.seed);
}

ww::SearchSpace make_space(const MergeArgs& a) {
  return a.lambda_range.empty() ? ww::default_search_space(a.method) : ww::SearchSpace::parse(a.lambda_range);
}

ww::DTypePolicy policy(const MergeArgs& a) {
  return a.dtype == "keep" ? ww::DTypePolicy::keep : ww::DTypePolicy::force_f32;
}

std::vector<ww::TensorMap> read_all(const std::vector<std::string>& paths) {
  std::vector<ww::TensorMap> maps;
  for (const auto& p : paths) {
    log(LogLevel::debug, "reading " + p);
    maps.push_back(ww::read_checkpoint(p));
  }
  return maps;
}

std::vector<std::string> stems(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(fs::path(p).stem().string());
  return out;
}

void write_json(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  out << text << "\n";
  if (!out) throw ww::IoError("cannot write '" + path + "'");
}

fs::path report_path(const fs::path& out) {
  fs::path p = out;
  if (p.extension() == ".safetensors") p.replace_extension();
  p += ".report.json";
  return p;
}

int cmd_deltas(const MergeArgs& a, const std::string& out_dir) {
  const auto pre = ww::read_checkpoint(a.pretrained);
  const auto ft = read_all(a.finetuned);
  const auto labels = stems(a.finetuned);
  const auto deltas = ww::compute_deltas(pre, ft, labels);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ww::IoError("cannot create '" + out_dir + "': " + ec.message());
  std::vector<std::string> seen;
  for (const auto& tv : deltas) {
    if (std::find(seen.begin(), seen.end(), tv.source_name) != seen.end())
      throw ww::ValidationError("two fine-tuned inputs share the file name '" + tv.source_name + "'");
    seen.push_back(tv.source_name);
    const auto path = fs::path(out_dir) / (tv.source_name + ".delta.safetensors");
    ww::write_checkpoint(tv.delta, path, policy(a));
    log(LogLevel::info, "wrote " + path.string());
  }
  return 0;
}

int cmd_merge(const MergeArgs& a, const std::string& out) {
  const auto spec = make_spec(a);
  const auto pre = ww::read_checkpoint(a.pretrained);
  const auto ft = read_all(a.finetuned);
  const auto deltas = ww::compute_deltas(pre, ft, stems(a.finetuned));
  const auto merged = ww::add(pre, ww::merge(deltas, spec));
  ww::write_checkpoint(merged, out, policy(a));
  log(LogLevel::info, "wrote " + out + " (" + spec.method() + ", lambda " + ww::format_number(spec.lambda()) + ")");
  return 0;
}

int cmd_weave(const MergeArgs& a, const std::string& out) {
  const auto spec = make_spec(a);
  const auto space = make_space(a);
  const ww::PoolSpec pool{ww::parse_pooling(a.pooling), a.seed, a.include_deltas};
  const auto pre = ww::read_checkpoint(a.pretrained);
  const auto ft = read_all(a.finetuned);
  auto result = ww::weave(pre, ft, spec, space, pool, {a.threads, nullptr});
  ww::write_checkpoint(result.merged, out, policy(a));
  const auto rp = report_path(out);
  write_json(rp.string(), result.report.to_json().dump(2));
  log(LogLevel::info, "wrote " + out + " and " + rp.string() + " (N = " +
                          std::to_string(result.report.pooled_set_size) + ")");
  return 0;
}

int cmd_cosine(const std::vector<std::string>& delta_paths, const std::string& out) {
  std::vector<ww::TaskVector> tvs;
  const auto labels = stems(delta_paths);
  for (std::size_t i = 0; i < delta_paths.size(); ++i)
    tvs.push_back({ww::read_checkpoint(delta_paths[i]), labels[i], i + 1});
  write_json(out, ww::cosine_matrix(tvs).to_json().dump(2));
  return 0;
}

int cmd_best_lambda(const std::string& csv, const std::string& out) {
  const auto table = ww::read_accuracy_csv(csv);
  write_json(out, ww::best_lambda_histogram(table).to_json().dump(2));
  return 0;
}

int cmd_sweep(const MergeArgs& a, const std::string& out_dir) {
  const auto spec = make_spec(a);
  const auto space = make_space(a);
  const auto pre = ww::read_checkpoint(a.pretrained);
  const auto ft = read_all(a.finetuned);
  const auto paths = ww::sweep_emit(pre, ft, spec, space, out_dir);
  log(LogLevel::info, "wrote " + std::to_string(paths.size()) + " checkpoints to " + out_dir);
  return 0;
}

int cmd_inspect(const std::string& path) {
  const auto map = ww::read_checkpoint(path);
  std::cout << path << ": " << map.size() << " tensors, " << map.total_elements() << " elements\n";
  for (const auto& [name, t] : map)
    std::cout << name << "\t" << ww::dtype_name(t.dtype()) << "\t" << ww::shape_string(t.shape()) << "\t"
              << t.size() << "\n";
  for (const auto& [k, v] : map.metadata()) std::cout << "metadata\t" << k << "\t" << v << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight Weaving: data-free pooling of merged checkpoints across a scaling-factor search space"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  MergeArgs args;
  std::string out, out_dir, csv, inspect_path;
  std::vector<std::string> delta_paths;

  auto* deltas = app.add_subcommand("deltas", "Write finetuned - pretrained for each fine-tuned checkpoint");
  add_inputs(deltas, args);
  deltas->add_option("--out-dir", out_dir, "Output directory")->required();
  deltas->add_option("--dtype", args.dtype, "Output dtype policy")->check(CLI::IsMember({"f32", "keep"}));

  auto* merge = app.add_subcommand("merge", "Merge with a single scaling factor");
  add_inputs(merge, args);
  Options merge_opts = add_merge_flags(merge, args, true);
  merge->add_option("--out", out, "Output checkpoint")->required();

  auto* weave = app.add_subcommand("weave", "Pool merges across the lambda search space");
  add_inputs(weave, args);
  Options weave_opts = add_merge_flags(weave, args, false);
  weave_opts.pooling = weave->add_option("--pooling", args.pooling, "avg, random or magmax");
  weave_opts.lambda_range =
      weave->add_option("--lambda-range", args.lambda_range, "start:stop:step or JSON list (default: method range)");
  weave_opts.include_deltas = weave->add_option("--include-deltas", args.include_deltas,
                                                "Pool over task vectors + augmented set (true) or augmented only");
  weave->add_option("--out", out, "Output checkpoint; the report is written beside it")->required();

  auto* analyze = app.add_subcommand("analyze", "Analysis tools");
  analyze->require_subcommand(1);
  auto* cosine = analyze->add_subcommand("cosine", "Pairwise cosine similarity of task vectors");
  cosine->add_option("--deltas", delta_paths, "Delta checkpoints")->required();
  cosine->add_option("--out", out, "Output JSON (default: stdout)");
  auto* best = analyze->add_subcommand("best-lambda", "Histogram of per-task best lambda");
  best->add_option("--csv", csv, "Accuracy table with header task,lambda,accuracy")->required();
  best->add_option("--out", out, "Output JSON (default: stdout)");
  auto* sweep = analyze->add_subcommand("sweep", "Emit one merged checkpoint per lambda");
  add_inputs(sweep, args);
  Options sweep_opts = add_merge_flags(sweep, args, false);
  sweep_opts.lambda_range =
      sweep->add_option("--lambda-range", args.lambda_range, "start:stop:step or JSON list (default: method range)");
  sweep->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "List tensors of a checkpoint");
  inspect->add_option("path", inspect_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  g_log_level = log_level == "error" ? LogLevel::error
              : log_level == "warn"  ? LogLevel::warn
              : log_level == "debug" ? LogLevel::debug
                                     : LogLevel::info;

  try {
    if (deltas->parsed()) return cmd_deltas(args, out_dir);
    if (merge->parsed()) {
      apply_config(args, merge_opts);
      return cmd_merge(args, out);
    }
    if (weave->parsed()) {
      apply_config(args, weave_opts);
      return cmd_weave(args, out);
    }
    if (cosine->parsed()) return cmd_cosine(delta_paths, out);
    if (best->parsed()) return cmd_best_lambda(csv, out);
    if (sweep->parsed()) {
      apply_config(args, sweep_opts);
      return cmd_sweep(args, out_dir);
    }
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const ww::ValidationError& e) {
    log(LogLevel::error, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::error, e.what());
    return 1;
  }
  return 2;
}
