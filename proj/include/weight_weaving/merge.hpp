#pragma once

// Built-in merge functions (Task Arithmetic, DARE, TIES, Breadcrumbs,
// MagMax) and the registry that resolves method names to them.
//
// Every built-in method works tensor by tensor: the merged value of a
// tensor depends only on that tensor's slices of the task vectors. Methods
// are therefore registered as per-tensor kernels, and whole-map merging and
// the streaming weave driver are both built on the same kernel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "task_vectors.hpp"
#include "tensor.hpp"

namespace ww {

namespace methods {
inline constexpr std::string_view task_arithmetic = "task_arithmetic";
inline constexpr std::string_view dare = "dare";
inline constexpr std::string_view ties = "ties";
inline constexpr std::string_view breadcrumbs = "breadcrumbs";
inline constexpr std::string_view magmax = "magmax";
}  // namespace methods

struct MergeParams {
  double drop_rate = 0.9;      // dare: p in [0, 1)
  double keep_fraction = 0.2;  // ties: k in (0, 1]
  double beta = 0.85;          // breadcrumbs: smallest fraction dropped
  double gamma = 0.01;         // breadcrumbs: largest fraction dropped

  void validate() const {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0))
      throw ValidationError("dare drop rate must be in [0, 1), got " + std::to_string(drop_rate));
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
      throw ValidationError("ties keep fraction must be in (0, 1], got " + std::to_string(keep_fraction));
    if (!(beta >= 0.0 && beta < 1.0) || !(gamma >= 0.0 && gamma < 1.0))
      throw ValidationError("breadcrumbs beta and gamma must be in [0, 1)");
    if (!(beta + gamma < 1.0))
      throw ValidationError("breadcrumbs needs beta + gamma < 1, got " + std::to_string(beta + gamma));
  }
};

// Method name, scaling factor and hyperparameters. Ranges are checked on
// construction, so a MergeSpec that exists is valid.
class MergeSpec {
 public:
  MergeSpec(std::string method, double lambda, MergeParams params = {}, std::uint64_t seed = 0)
      : method_(std::move(method)), lambda_(lambda), params_(params), seed_(seed) {
    if (method_.empty()) throw ValidationError("merge method name is empty");
    if (!std::isfinite(lambda_) || !(lambda_ > 0.0))
      throw ValidationError("lambda must be a positive finite number, got " + std::to_string(lambda_));
    params_.validate();
  }

  const std::string& method() const { return method_; }
  double lambda() const { return lambda_; }
  float lambda_f32() const { return static_cast<float>(lambda_); }
  const MergeParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  MergeSpec with_lambda(double lambda) const { return MergeSpec(method_, lambda, params_, seed_); }

  nlohmann::json to_json() const {
    nlohmann::json p = nlohmann::json::object();
    if (method_ == methods::dare) p["drop_rate"] = params_.drop_rate;
    if (method_ == methods::ties) p["keep_fraction"] = params_.keep_fraction;
    if (method_ == methods::breadcrumbs) {
      p["beta"] = params_.beta;
      p["gamma"] = params_.gamma;
    }
    return {{"method", method_}, {"lambda", lambda_}, {"params", p}, {"seed", seed_}};
  }

  static MergeSpec from_json(const nlohmann::json& j) {
    try {
      MergeParams params;
      if (j.contains("params")) {
        for (const auto& [key, value] : j.at("params").items()) {
          if (key == "drop_rate") params.drop_rate = value.get<double>();
          else if (key == "keep_fraction") params.keep_fraction = value.get<double>();
          else if (key == "beta") params.beta = value.get<double>();
          else if (key == "gamma") params.gamma = value.get<double>();
          else throw ValidationError("unknown merge parameter '" + key + "'");
        }
      }
      return MergeSpec(j.at("method").get<std::string>(), j.at("lambda").get<double>(), params,
                       j.value("seed", std::uint64_t{0}));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("bad merge spec JSON: ") + e.what());
    }
  }

 private:
  std::string method_;
  double lambda_;
  MergeParams params_;
  std::uint64_t seed_;
};

// One task's slice of a single tensor.
struct DeltaSlice {
  std::span<const float> values;
  std::uint32_t task = 1;  // 1-based task index, feeds position-derived seeding
};

// Per-tensor merge kernel: returns the merged delta for `tensor_name`.
using TensorMergeFn = std::function<std::vector<float>(
    std::string_view tensor_name, std::span<const DeltaSlice> deltas, const MergeSpec& spec)>;

namespace detail {

// Rounds k*n to the nearest integer when it is within 1e-9 relative of
// one, so 0.7 * 10 counts as 7 rather than 7.000000000000001.
inline double snapped_product(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  const double r = std::round(x);
  return std::fabs(x - r) <= 1e-9 * std::max(1.0, x) ? r : x;
}

inline std::size_t ceil_count(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::ceil(snapped_product(fraction, n))));
}

inline std::size_t floor_count(double fraction, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::floor(snapped_product(fraction, n))));
}

inline std::size_t slice_size(std::span<const DeltaSlice> deltas) {
  if (deltas.empty()) throw ValidationError("merge needs at least one task vector");
  const std::size_t n = deltas[0].values.size();
  for (const auto& d : deltas)
    if (d.values.size() != n) throw SchemaMismatch("task vector slices differ in length");
  return n;
}

// lambda * sum_t delta_t, summed in task order.
inline std::vector<float> scaled_sum(std::span<const std::vector<float>> masked, std::size_t n,
                                     float lambda) {
  std::vector<float> out(n, 0.0f);
  for (const auto& m : masked)
    for (std::size_t p = 0; p < n; ++p) out[p] += m[p];
  for (auto& v : out) v = lambda * v;
  return out;
}

}  // namespace detail

// Per element, the index of the member with the largest |value|; ties go to
// the lowest index. Shared by the MagMax merge and MagMax pooling.
inline std::vector<std::uint32_t> magmax_indices(std::span<const std::span<const float>> members) {
  if (members.empty()) throw ValidationError("magmax over an empty set");
  const std::size_t n = members[0].size();
  std::vector<std::uint32_t> best(n, 0);
  for (std::uint32_t m = 1; m < members.size(); ++m) {
    const auto v = members[m];
    for (std::size_t p = 0; p < n; ++p)
      if (std::fabs(v[p]) > std::fabs(members[best[p]][p])) best[p] = m;
  }
  return best;
}

namespace kernels {

inline std::vector<float> task_arithmetic(std::string_view, std::span<const DeltaSlice> deltas,
                                          const MergeSpec& spec) {
  const std::size_t n = detail::slice_size(deltas);
  std::vector<float> out(n, 0.0f);
  for (const auto& d : deltas)
    for (std::size_t p = 0; p < n; ++p) out[p] += d.values[p];
  const float lambda = spec.lambda_f32();
  for (auto& v : out) v = lambda * v;
  return out;
}

// Each element of each task vector is dropped with probability p and the
// survivors are divided by (1 - p); the masked vectors are then summed as
// in Task Arithmetic. The drop decision for element i of task t in tensor
// `name` comes from the positional stream (seed, dare_drop, t, name).
inline std::vector<float> dare(std::string_view name, std::span<const DeltaSlice> deltas,
                               const MergeSpec& spec) {
  const std::size_t n = detail::slice_size(deltas);
  const float p = static_cast<float>(spec.params().drop_rate);
  const float keep = 1.0f - p;
  std::vector<float> out(n, 0.0f);
  for (const auto& d : deltas) {
    const rng::PositionalStream stream(spec.seed(), rng::stream_id(rng::Purpose::dare_drop, d.task, name));
    for (std::size_t i = 0; i < n; ++i) {
      if (stream.uniform(i) < p) continue;
      out[i] += d.values[i] / keep;
    }
  }
  const float lambda = spec.lambda_f32();
  for (auto& v : out) v = lambda * v;
  return out;
}

// TIES: trim each task slice to its ceil(k*n) largest magnitudes (lower
// index wins ties), elect the sign of the trimmed sum, then average the
// trimmed values that agree with the elected sign.
inline std::vector<float> ties(std::string_view, std::span<const DeltaSlice> deltas,
                               const MergeSpec& spec) {
  const std::size_t n = detail::slice_size(deltas);
  const std::size_t keep = detail::ceil_count(spec.params().keep_fraction, n);

  std::vector<std::vector<float>> trimmed;
  trimmed.reserve(deltas.size());
  std::vector<std::uint32_t> order(n);
  for (const auto& d : deltas) {
    const auto v = d.values;
    std::vector<float> t(n, 0.0f);
    std::iota(order.begin(), order.end(), 0u);
    auto larger = [&](std::uint32_t a, std::uint32_t b) {
      const float ma = std::fabs(v[a]), mb = std::fabs(v[b]);
      return ma > mb || (ma == mb && a < b);
    };
    if (keep < n) std::nth_element(order.begin(), order.begin() + keep, order.end(), larger);
    for (std::size_t r = 0; r < keep; ++r) t[order[r]] = v[order[r]];
    trimmed.push_back(std::move(t));
  }

  const float lambda = spec.lambda_f32();
  std::vector<float> out(n, 0.0f);
  for (std::size_t p = 0; p < n; ++p) {
    float total = 0.0f;
    for (const auto& t : trimmed) total += t[p];
    const int elected = (total > 0.0f) - (total < 0.0f);
    if (elected == 0) continue;
    float sum = 0.0f;
    int count = 0;
    for (const auto& t : trimmed) {
      const int s = (t[p] > 0.0f) - (t[p] < 0.0f);
      if (s == elected) {
        sum += t[p];
        ++count;
      }
    }
    if (count > 0) out[p] = lambda * (sum / static_cast<float>(count));
  }
  return out;
}

// Breadcrumbs: per task slice, zero the floor(beta*n) smallest magnitudes
// (lower index dropped first on ties) and the floor(gamma*n) largest
// (higher index dropped first), then sum as in Task Arithmetic.
inline std::vector<float> breadcrumbs(std::string_view, std::span<const DeltaSlice> deltas,
                                      const MergeSpec& spec) {
  const std::size_t n = detail::slice_size(deltas);
  const std::size_t small = detail::floor_count(spec.params().beta, n);
  const std::size_t large = std::min(detail::floor_count(spec.params().gamma, n), n - small);

  std::vector<std::vector<float>> masked;
  masked.reserve(deltas.size());
  std::vector<std::uint32_t> order(n);
  for (const auto& d : deltas) {
    const auto v = d.values;
    std::vector<float> m(v.begin(), v.end());
    if (small + large > 0) {
      // ascending by (|v|, index): the first `small` and the last `large`
      // entries of this order are dropped
      std::iota(order.begin(), order.end(), 0u);
      auto smaller = [&](std::uint32_t a, std::uint32_t b) {
        const float ma = std::fabs(v[a]), mb = std::fabs(v[b]);
        return ma < mb || (ma == mb && a < b);
      };
      if (small > 0 && small < n) std::nth_element(order.begin(), order.begin() + small, order.end(), smaller);
      if (large > 0)
        std::nth_element(order.begin() + small, order.end() - large, order.end(), smaller);
      for (std::size_t r = 0; r < small; ++r) m[order[r]] = 0.0f;
      for (std::size_t r = n - large; r < n; ++r) m[order[r]] = 0.0f;
    }
    masked.push_back(std::move(m));
  }
  return detail::scaled_sum(masked, n, spec.lambda_f32());
}

inline std::vector<float> magmax(std::string_view, std::span<const DeltaSlice> deltas,
                                 const MergeSpec& spec) {
  const std::size_t n = detail::slice_size(deltas);
  std::vector<std::span<const float>> members;
  for (const auto& d : deltas) members.push_back(d.values);
  const auto best = magmax_indices(members);
  const float lambda = spec.lambda_f32();
  std::vector<float> out(n);
  for (std::size_t p = 0; p < n; ++p) out[p] = lambda * members[best[p]][p];
  return out;
}

}  // namespace kernels

// Applies a per-tensor kernel to every tensor of the task vectors.
inline TensorMap merge_with(const TensorMergeFn& kernel, std::span<const TaskVector> deltas,
                            const MergeSpec& spec) {
  if (deltas.empty()) throw ValidationError("merge needs at least one task vector");
  for (std::size_t t = 1; t < deltas.size(); ++t)
    require_compatible(deltas[0].delta, deltas[t].delta, deltas[t].source_name);
  TensorMap out;
  std::vector<DeltaSlice> slices(deltas.size());
  for (const auto& [name, first] : deltas[0].delta) {
    for (std::size_t t = 0; t < deltas.size(); ++t)
      slices[t] = {deltas[t].delta.at(name).values(),
                   static_cast<std::uint32_t>(deltas[t].index ? deltas[t].index : t + 1)};
    out.insert(name, Tensor(first.shape(), kernel(name, slices, spec)));
  }
  return out;
}

// A registered method: callable on whole task vectors, or per tensor.
struct MergeMethod {
  std::string name;
  TensorMergeFn kernel;

  TensorMap operator()(std::span<const TaskVector> deltas, const MergeSpec& spec) const {
    return merge_with(kernel, deltas, spec);
  }
};

class MergeRegistry {
 public:
  // Registry holding the five built-in methods.
  static MergeRegistry with_builtins() {
    MergeRegistry r;
    r.add(std::string(methods::task_arithmetic), kernels::task_arithmetic);
    r.add(std::string(methods::dare), kernels::dare);
    r.add(std::string(methods::ties), kernels::ties);
    r.add(std::string(methods::breadcrumbs), kernels::breadcrumbs);
    r.add(std::string(methods::magmax), kernels::magmax);
    return r;
  }

  void add(std::string name, TensorMergeFn kernel) {
    if (methods_.count(name)) throw ValidationError("merge method '" + name + "' already registered");
    methods_.emplace(name, MergeMethod{name, std::move(kernel)});
  }

  bool contains(std::string_view name) const { return methods_.find(name) != methods_.end(); }

  const MergeMethod& lookup(std::string_view name) const {
    auto it = methods_.find(name);
    if (it == methods_.end()) {
      std::string known;
      for (const auto& [n, _] : methods_) known += (known.empty() ? "" : ", ") + n;
      throw ValidationError("unknown method '" + std::string(name) + "' (available: " + known + ")");
    }
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : methods_) out.push_back(n);
    return out;
  }

 private:
  std::map<std::string, MergeMethod, std::less<>> methods_;
};

inline const MergeRegistry& builtin_registry() {
  static const MergeRegistry registry = MergeRegistry::with_builtins();
  return registry;
}

inline const MergeMethod& registry_lookup(std::string_view name) {
  return builtin_registry().lookup(name);
}

// Merges with the method named in `spec`.
inline TensorMap merge(std::span<const TaskVector> deltas, const MergeSpec& spec,
                       const MergeRegistry& registry = builtin_registry()) {
  return registry.lookup(spec.method())(deltas, spec);
}

inline TensorMap task_arithmetic(std::span<const TaskVector> d, const MergeSpec& s) {
  return merge_with(kernels::task_arithmetic, d, s);
}
inline TensorMap dare(std::span<const TaskVector> d, const MergeSpec& s) {
  return merge_with(kernels::dare, d, s);
}
inline TensorMap ties(std::span<const TaskVector> d, const MergeSpec& s) {
  return merge_with(kernels::ties, d, s);
}
inline TensorMap breadcrumbs(std::span<const TaskVector> d, const MergeSpec& s) {
  return merge_with(kernels::breadcrumbs, d, s);
}
inline TensorMap magmax(std::span<const TaskVector> d, const MergeSpec& s) {
  return merge_with(kernels::magmax, d, s);
}

}  // namespace ww
