#pragma once

// Weight Weaving driver. For every lambda in the search space the merge
// function produces one augmented delta; the augmented set (optionally
// joined with the raw task vectors) is pooled per parameter and the pooled
// delta is added back onto the pre-trained weights.
//
// Execution is streamed per tensor: for one tensor name the member slices
// are built, pooled and dropped before the next name is touched, so peak
// extra memory per worker is about (N + 2) x the largest tensor.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "merge.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "task_vectors.hpp"
#include "tensor.hpp"

namespace ww {

// Shortest decimal text that round-trips the double (0.5 -> "0.5", 1 -> "1").
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

class SearchSpace {
 public:
  enum class Origin { default_range, method_default, user };

  explicit SearchSpace(std::vector<double> lambdas, Origin origin = Origin::user)
      : lambdas_(std::move(lambdas)), origin_(origin) {
    if (lambdas_.empty()) throw ValidationError("lambda search space is empty");
    for (std::size_t i = 0; i < lambdas_.size(); ++i) {
      if (!std::isfinite(lambdas_[i]) || !(lambdas_[i] > 0.0))
        throw ValidationError("lambda values must be positive, got " + format_number(lambdas_[i]));
      if (i > 0 && !(lambdas_[i] > lambdas_[i - 1]))
        throw ValidationError("lambda values must be strictly increasing");
    }
  }

  // Inclusive range start, start+step, ... up to stop (within 1e-9).
  static SearchSpace range(double start, double stop, double step, Origin origin = Origin::user) {
    if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("lambda range step must be positive");
    if (!std::isfinite(start) || !std::isfinite(stop) || stop < start - 1e-9)
      throw ValidationError("lambda range needs start <= stop");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 1'000'000) throw ValidationError("lambda range has too many values");
    std::vector<double> values;
    for (std::size_t i = 0; i < count; ++i) {
      const double v = start + static_cast<double>(i) * step;
      if (v > stop + 1e-9) break;
      // strip accumulated binary noise (0.30000000000000004 -> 0.3)
      values.push_back(std::round(v * 1e12) / 1e12);
    }
    return SearchSpace(std::move(values), origin);
  }

  // "start:stop:step" or a JSON list such as "[0.2, 0.5, 1.0]".
  static SearchSpace parse(std::string_view text) {
    const auto first = text.find_first_not_of(" \t");
    if (first != std::string_view::npos && text[first] == '[') {
      try {
        return SearchSpace(nlohmann::json::parse(text).get<std::vector<double>>());
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad lambda list '" + std::string(text) + "': " + e.what());
      }
    }
    double parts[3];
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
      const auto colon = i < 2 ? text.find(':', pos) : text.size();
      if (colon == std::string_view::npos)
        throw ValidationError("lambda range must look like start:stop:step, got '" + std::string(text) + "'");
      const auto piece = text.substr(pos, colon - pos);
      auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), parts[i]);
      if (ec != std::errc() || ptr != piece.data() + piece.size())
        throw ValidationError("bad number '" + std::string(piece) + "' in lambda range");
      pos = colon + 1;
    }
    return range(parts[0], parts[1], parts[2]);
  }

  const std::vector<double>& lambdas() const { return lambdas_; }
  std::size_t size() const { return lambdas_.size(); }
  Origin origin() const { return origin_; }

 private:
  std::vector<double> lambdas_;
  Origin origin_;
};

// 0.1..1.0 (step 0.1) for every method except TIES, which uses 0.1..1.5.
inline SearchSpace default_search_space(std::string_view method) {
  const bool builtin = builtin_registry().contains(method);
  const auto origin = builtin ? SearchSpace::Origin::method_default : SearchSpace::Origin::default_range;
  if (method == methods::ties) return SearchSpace::range(0.1, 1.5, 0.1, origin);
  return SearchSpace::range(0.1, 1.0, 0.1, origin);
}

enum class Pooling { avg, random, magmax };

inline std::string_view pooling_name(Pooling p) {
  switch (p) {
    case Pooling::avg: return "avg";
    case Pooling::random: return "random";
    case Pooling::magmax: return "magmax";
  }
  return "?";
}

inline Pooling parse_pooling(std::string_view s) {
  if (s == "avg") return Pooling::avg;
  if (s == "random") return Pooling::random;
  if (s == "magmax") return Pooling::magmax;
  throw ValidationError("unknown pooling '" + std::string(s) + "' (available: avg, magmax, random)");
}

struct PoolSpec {
  Pooling pooling = Pooling::avg;
  std::uint64_t seed = 0;       // random pooling only
  bool include_deltas = true;   // pool over deltas + augmented, not augmented alone

  std::size_t cardinality(std::size_t num_lambdas, std::size_t num_tasks) const {
    return num_lambdas + (include_deltas ? num_tasks : 0);
  }
};

// Pools one tensor's member slices. Members are in canonical order: task
// vectors in task order first (when included), then augmented deltas in
// lambda order.
inline std::vector<float> pool_slices(std::string_view tensor_name,
                                      std::span<const std::span<const float>> members,
                                      Pooling pooling, std::uint64_t seed) {
  if (members.empty()) throw ValidationError("pooling over an empty set");
  const std::size_t n = members[0].size();
  for (const auto& m : members)
    if (m.size() != n) throw SchemaMismatch("pooled members differ in length");

  std::vector<float> out(n);
  switch (pooling) {
    case Pooling::avg: {
      // double accumulation keeps the mean of identical members exact
      const double count = static_cast<double>(members.size());
      for (std::size_t p = 0; p < n; ++p) {
        double sum = 0.0;
        for (const auto& m : members) sum += m[p];
        out[p] = static_cast<float>(sum / count);
      }
      break;
    }
    case Pooling::random: {
      const rng::PositionalStream stream(seed, rng::stream_id(rng::Purpose::random_pool, 0, tensor_name));
      for (std::size_t p = 0; p < n; ++p) out[p] = members[stream.below(p, members.size())][p];
      break;
    }
    case Pooling::magmax: {
      const auto best = magmax_indices(members);
      for (std::size_t p = 0; p < n; ++p) out[p] = members[best[p]][p];
      break;
    }
  }
  return out;
}

inline TensorMap pool(std::span<const TensorMap> members, Pooling pooling, std::uint64_t seed = 0) {
  if (members.empty()) throw ValidationError("pooling over an empty set");
  for (std::size_t i = 1; i < members.size(); ++i) require_compatible(members[0], members[i], "pool");
  TensorMap out;
  std::vector<std::span<const float>> slices(members.size());
  for (const auto& [name, first] : members[0]) {
    for (std::size_t i = 0; i < members.size(); ++i) slices[i] = members[i].at(name).values();
    out.insert(name, Tensor(first.shape(), pool_slices(name, slices, pooling, seed)));
  }
  return out;
}

// A = [f_merge(deltas, lambda_i)] in lambda order.
inline std::vector<TensorMap> build_augmented(std::span<const TaskVector> deltas, const MergeMethod& method,
                                              const MergeSpec& spec_template, const SearchSpace& space) {
  if (deltas.empty()) throw ValidationError("no task vectors to merge");
  std::vector<TensorMap> out;
  out.reserve(space.size());
  for (double lambda : space.lambdas()) out.push_back(method(deltas, spec_template.with_lambda(lambda)));
  return out;
}

struct WeaveReport {
  std::string method;
  std::vector<double> lambdas;
  Pooling pooling = Pooling::avg;
  bool include_deltas = true;
  std::size_t num_tasks = 0;
  std::size_t pooled_set_size = 0;  // N
  std::vector<std::pair<std::string, std::uint64_t>> tensor_elements;
  double wall_time_ms = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
    for (const auto& [name, count] : tensor_elements) tensors[name] = count;
    nlohmann::ordered_json j;
    j["method"] = method;
    j["lambdas"] = lambdas;
    j["pooling"] = std::string(pooling_name(pooling));
    j["include_deltas"] = include_deltas;
    j["num_tasks"] = num_tasks;
    j["N"] = pooled_set_size;
    j["tensor_elements"] = tensors;
    j["wall_time_ms"] = wall_time_ms;
    return j;
  }
};

struct WeaveOptions {
  unsigned workers = 1;
  const MergeRegistry* registry = nullptr;  // builtins when null
};

struct WeaveResult {
  TensorMap merged;
  WeaveReport report;
};

inline WeaveResult weave(const TensorMap& pretrained, std::span<const TensorMap> finetuned,
                         const MergeSpec& spec_template, const SearchSpace& space,
                         const PoolSpec& pool_spec, const WeaveOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (finetuned.empty()) throw ValidationError("weave needs at least one fine-tuned checkpoint");
  for (std::size_t t = 0; t < finetuned.size(); ++t)
    require_compatible(pretrained, finetuned[t], "task" + std::to_string(t + 1));

  const MergeRegistry& registry = options.registry ? *options.registry : builtin_registry();
  const MergeMethod& method = registry.lookup(spec_template.method());
  std::vector<MergeSpec> specs;
  for (double lambda : space.lambdas()) specs.push_back(spec_template.with_lambda(lambda));

  const auto names = pretrained.names();
  const std::size_t num_tasks = finetuned.size();
  std::vector<std::vector<float>> results(names.size());

  parallel_for(names.size(), options.workers, [&](std::size_t i) {
    const std::string& name = names[i];
    const auto base = pretrained.at(name).values();
    const std::size_t n = base.size();

    std::vector<std::vector<float>> deltas(num_tasks, std::vector<float>(n));
    std::vector<DeltaSlice> slices(num_tasks);
    for (std::size_t t = 0; t < num_tasks; ++t) {
      const auto ft = finetuned[t].at(name).values();
      for (std::size_t p = 0; p < n; ++p) deltas[t][p] = ft[p] - base[p];
      slices[t] = {deltas[t], static_cast<std::uint32_t>(t + 1)};
    }

    std::vector<std::vector<float>> augmented;
    augmented.reserve(specs.size());
    for (const auto& spec : specs) {
      augmented.push_back(method.kernel(name, slices, spec));
      if (augmented.back().size() != n)
        throw SchemaMismatch("merge method '" + method.name + "' changed the size of tensor '" + name + "'");
    }

    std::vector<std::span<const float>> members;
    if (pool_spec.include_deltas)
      for (const auto& d : deltas) members.emplace_back(d);
    for (const auto& a : augmented) members.emplace_back(a);

    auto pooled = pool_slices(name, members, pool_spec.pooling, pool_spec.seed);
    for (std::size_t p = 0; p < n; ++p) pooled[p] = base[p] + pooled[p];
    results[i] = std::move(pooled);
  });

  WeaveResult result;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& base = pretrained.at(names[i]);
    result.merged.insert(names[i], Tensor(base.shape(), std::move(results[i]), base.dtype()));
    result.report.tensor_elements.emplace_back(names[i], base.size());
  }
  auto& report = result.report;
  report.method = spec_template.method();
  report.lambdas = space.lambdas();
  report.pooling = pool_spec.pooling;
  report.include_deltas = pool_spec.include_deltas;
  report.num_tasks = num_tasks;
  report.pooled_set_size = pool_spec.cardinality(space.size(), num_tasks);
  report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ww
