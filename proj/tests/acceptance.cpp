// Acceptance suite: one line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"

using namespace ww;
using namespace ww::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

const std::vector<std::string> kMethods = {"task_arithmetic", "dare", "ties", "breadcrumbs", "magmax"};
const std::vector<std::string> kPoolings = {"avg", "random", "magmax"};

struct Instance {
  TensorMap pre;
  std::vector<TensorMap> ft;
};

// Sizes are log-uniform so small edge cases and full-size tensors both show up;
// with `full` the first tensor has exactly max_per_tensor elements.
Instance random_instance(std::mt19937_64& rng, int tasks, std::size_t max_per_tensor, bool full = false) {
  std::uniform_int_distribution<int> ntensors(1, 3);
  std::uniform_real_distribution<double> logsize(0.0, std::log(static_cast<double>(max_per_tensor)));
  std::vector<std::pair<std::string, Shape>> schema;
  for (int i = 0, k = ntensors(rng); i < k; ++i) {
    const std::size_t n = full && i == 0 ? max_per_tensor
                                         : std::clamp<std::size_t>(std::llround(std::exp(logsize(rng))), 1, max_per_tensor);
    Shape shape = n % 2 == 0 && n > 2 ? Shape{2, n / 2} : Shape{n};
    schema.emplace_back("block" + std::to_string(rng() % 1000) + ".weight", shape);
  }
  Instance inst{random_map(rng, schema), {}};
  for (int t = 0; t < tasks; ++t) inst.ft.push_back(add(inst.pre, random_map(rng, schema, 0.02f)));
  return inst;
}

// 1. Streaming weave == naive materializing oracle, bitwise.
Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  const int tasks[] = {1, 2, 3, 5};
  int instances = 0, runs = 0;
  for (int i = 0; i < 100; ++i, ++instances) {
    const int T = tasks[i % 4];
    const auto inst = random_instance(rng, T, 10'000, i % 10 == 0);
    std::vector<oracle::Flat> ft_flat;
    for (const auto& f : inst.ft) ft_flat.push_back(to_flat(f));
    const auto pre_flat = to_flat(inst.pre);
    MergeParams p;
    p.drop_rate = std::uniform_real_distribution<double>(0.0, 0.95)(rng);
    p.keep_fraction = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    p.beta = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
    p.gamma = std::uniform_real_distribution<double>(0.0, 0.4)(rng);
    for (const auto& method : kMethods) {
      const MergeSpec spec(method, 1.0, p, rng());
      const auto space = i % 5 == 4 ? SearchSpace({0.3, 0.9, 2.0}) : default_search_space(method);
      for (const auto& pooling : kPoolings) {
        const bool include = (i + runs) % 2 == 0;
        const std::uint64_t seed = rng();
        const auto got =
            weave(inst.pre, inst.ft, spec, space, PoolSpec{parse_pooling(pooling), seed, include}, {2, nullptr});
        const oracle::Params prm{method, p.drop_rate, p.keep_fraction, p.beta, p.gamma, spec.seed()};
        const auto expect = oracle::weave(pre_flat, ft_flat, prm, space.lambdas(), pooling, seed, include);
        o.require(bitwise_equal(got.merged, expect),
                  "instance " + std::to_string(i) + " " + method + "/" + pooling + " differs from oracle");
        ++runs;
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs <= 30.0, "runtime " + std::to_string(secs) + " s exceeds 30 s");
  if (o.pass) {
    std::ostringstream ss;
    ss << instances << " instances x 15 method/pooling pairs = " << runs << " weaves, " << secs << " s";
    o.detail = ss.str();
  }
  return o;
}

// 2. TA + avg closed forms.
Outcome closed_form() {
  Outcome o;
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  for (int i = 0; i < 40; ++i) {
    const int T = 1 + i % 5;
    const auto inst = random_instance(rng, T, 3'000);
    std::vector<double> lambdas;
    for (double l = 0.05; lambdas.size() < static_cast<std::size_t>(1 + i % 12); l += 0.05 + (rng() % 10) / 100.0)
      lambdas.push_back(std::round(l * 100) / 100);
    const SearchSpace space(lambdas);
    const double sum_l = std::accumulate(lambdas.begin(), lambdas.end(), 0.0);
    for (bool include : {true, false}) {
      const auto r =
          weave(inst.pre, inst.ft, MergeSpec("task_arithmetic", 1.0), space, PoolSpec{Pooling::avg, 0, include});
      const double factor = include ? (1 + sum_l) / (T + lambdas.size()) : sum_l / lambdas.size();
      for (const auto& [name, base] : inst.pre)
        for (std::size_t p = 0; p < base.size(); ++p) {
          double s = 0;
          for (const auto& f : inst.ft) s += static_cast<double>(f.at(name)[p]) - base[p];
          const double err = std::fabs((static_cast<double>(r.merged.at(name)[p]) - base[p]) - factor * s);
          worst = std::max(worst, err);
        }
    }
  }
  o.require(worst <= 1e-6, "max deviation " + std::to_string(worst));
  if (o.pass) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "max |pooled - closed form| = %.3g (tol 1e-6)", worst);
    o.detail = buf;
  }
  return o;
}

// 3. Bitwise reductions.
Outcome reductions() {
  Outcome o;
  std::mt19937_64 rng(1003);
  for (int i = 0; i < 50; ++i) {
    const auto inst = random_instance(rng, 1 + i % 4, 4'000);
    const auto deltas = compute_deltas(inst.pre, inst.ft);
    const double lambda = 0.1 * (1 + i % 15);
    MergeParams p0;
    p0.drop_rate = 0.0;
    p0.beta = 0.0;
    p0.gamma = 0.0;
    p0.keep_fraction = 1.0;
    const auto ta = task_arithmetic(deltas, MergeSpec("task_arithmetic", lambda));
    o.require(bitwise_equal(dare(deltas, MergeSpec("dare", lambda, p0, rng())), ta), "dare(p=0) != TA");
    o.require(bitwise_equal(breadcrumbs(deltas, MergeSpec("breadcrumbs", lambda, p0)), ta), "breadcrumbs(0,0) != TA");

    const std::vector<TaskVector> one = {deltas[0]};
    TensorMap scaled;
    for (const auto& [name, t] : deltas[0].delta) {
      std::vector<float> v(t.size());
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<float>(lambda) * t[k];
      scaled.insert(name, Tensor(t.shape(), v));
    }
    o.require(bitwise_equal(ties(one, MergeSpec("ties", lambda, p0)), scaled), "ties(k=1,T=1) != lambda*delta");

    for (Pooling pooling : {Pooling::avg, Pooling::random, Pooling::magmax}) {
      const std::vector<TensorMap> single = {inst.ft[0]};
      o.require(bitwise_equal(pool(single, pooling, rng()), inst.ft[0]),
                std::string("singleton ") + std::string(pooling_name(pooling)) + " pooling is not identity");
    }
  }
  if (o.pass) o.detail = "50 instances: dare(p=0), breadcrumbs(0,0), ties(k=1,T=1), 3 singleton poolings";
  return o;
}

// 4. DARE statistics.
Outcome dare_statistics() {
  Outcome o;
  std::ostringstream ss;
  const std::size_t n = 100'000;
  const auto ones = make_deltas({std::vector<float>(n, 1.0f)});
  for (double p : {0.1, 0.5, 0.9}) {
    MergeParams mp;
    mp.drop_rate = p;
    const auto out = dare(ones, MergeSpec("dare", 1.0, mp, 4242)).at("w");
    std::size_t dropped = 0;
    for (float v : out.values()) dropped += v == 0.0f;
    const double frac = static_cast<double>(dropped) / n;
    const double hw = 3.2905 * std::sqrt(p * (1 - p) / n);  // two-sided 99.9%
    o.require(frac >= p - hw && frac <= p + hw,
              "p=" + std::to_string(p) + " drop fraction " + std::to_string(frac) + " outside interval");
    ss << "p=" << p << ": " << frac << " in [" << p - hw << ", " << p + hw << "]; ";
  }

  std::mt19937_64 rng(1004);
  const std::size_t m = 200;
  std::vector<std::vector<float>> tasks(3, std::vector<float>(m));
  std::normal_distribution<float> nd;
  for (auto& t : tasks)
    for (auto& v : t) v = nd(rng);
  const auto deltas = make_deltas(tasks);
  const double p = 0.5, lambda = 0.8;
  MergeParams mp;
  mp.drop_rate = p;
  const int seeds = 1000;
  std::vector<double> mean(m, 0.0);
  for (int s = 0; s < seeds; ++s) {
    const auto out = dare(deltas, MergeSpec("dare", lambda, mp, static_cast<std::uint64_t>(s))).at("w");
    for (std::size_t k = 0; k < m; ++k) mean[k] += out[k] / static_cast<double>(seeds);
  }
  const auto ta = task_arithmetic(deltas, MergeSpec("task_arithmetic", lambda)).at("w");
  double worst_z = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double var = 0.0;
    for (const auto& t : tasks) var += lambda * lambda * t[k] * t[k] * p / (1 - p);
    const double se = std::sqrt(var / seeds);
    const double z = std::fabs(mean[k] - ta[k]) / se;
    worst_z = std::max(worst_z, z);
  }
  o.require(worst_z <= 5.0, "seed-averaged DARE deviates " + std::to_string(worst_z) + " standard errors");
  ss << "seed mean max deviation " << worst_z << " SE (limit 5)";
  if (o.pass) o.detail = ss.str();
  return o;
}

// 5. TIES sign safety.
Outcome ties_sign_safety() {
  Outcome o;
  std::mt19937_64 rng(1005);
  std::size_t nonzero = 0;
  for (int i = 0; i < 1000; ++i) {
    const int T = 1 + static_cast<int>(rng() % 6);
    const std::size_t n = 1 + rng() % 300;
    std::vector<std::vector<float>> tasks(T, std::vector<float>(n));
    std::normal_distribution<float> nd;
    for (auto& t : tasks)
      for (auto& v : t) v = rng() % 7 == 0 ? 0.0f : nd(rng);
    MergeParams p;
    p.keep_fraction = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const auto out = ties(make_deltas(tasks), MergeSpec("ties", 0.1 * (1 + i % 15), p)).at("w");

    // elected sign from independently trimmed vectors
    oracle::Params prm{"ties"};
    prm.keep_fraction = p.keep_fraction;
    std::vector<float> total(n, 0.0f);
    std::vector<bool> any(n, false);
    for (const auto& t : tasks) {
      const std::vector<std::vector<float>> single = {t};
      const auto trimmed = oracle::merge_tensor("w", single, prm, 1.0);
      for (std::size_t k = 0; k < n; ++k) {
        total[k] += trimmed[k];
        any[k] = any[k] || trimmed[k] != 0.0f;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (out[k] != 0.0f) {
        ++nonzero;
        o.require(oracle::sign_of(out[k]) == oracle::sign_of(total[k]),
                  "instance " + std::to_string(i) + " element " + std::to_string(k) + " has the wrong sign");
      }
      if (!any[k]) o.require(out[k] == 0.0f, "nonzero output where every trimmed value is zero");
    }
  }
  if (o.pass) o.detail = "1000 instances, " + std::to_string(nonzero) + " nonzero parameters checked";
  return o;
}

// 6. MagMax pooling over A* collapses onto lambda_max * sum(deltas).
Outcome magmax_collapse() {
  Outcome o;
  std::mt19937_64 rng(1006);
  int checked = 0;
  for (int i = 0; i < 60; ++i) {
    const int T = 1 + i % 5;
    const std::size_t n = 50 + rng() % 500;
    std::vector<float> base(n);
    std::normal_distribution<float> nd;
    for (auto& b : base) b = nd(rng);
    std::vector<std::vector<float>> d(T, std::vector<float>(n));
    const bool same_sign = i % 2 == 0;
    for (std::size_t p = 0; p < n; ++p) {
      const float sgn = rng() % 2 ? 1.0f : -1.0f;
      for (int t = 0; t < T; ++t) {
        const float mag = 0.01f + std::fabs(nd(rng));
        d[t][p] = same_sign ? sgn * mag : (rng() % 2 ? mag : -mag);
      }
    }
    TensorMap pre;
    pre.insert("w", Tensor({n}, base));
    std::vector<TensorMap> ft;
    for (int t = 0; t < T; ++t) {
      std::vector<float> v(n);
      for (std::size_t p = 0; p < n; ++p) v[p] = base[p] + d[t][p];
      TensorMap m;
      m.insert("w", Tensor({n}, v));
      ft.push_back(std::move(m));
    }
    // premise is checked on the deltas the library will actually see
    const auto deltas = compute_deltas(pre, ft);
    const auto sum = task_arithmetic(deltas, MergeSpec("task_arithmetic", 1.0)).at("w");
    double need = 1.0;
    for (std::size_t p = 0; p < n; ++p)
      for (const auto& tv : deltas)
        if (sum[p] != 0.0f) need = std::max(need, double(std::fabs(tv.delta.at("w")[p])) / std::fabs(sum[p]));
    const double lambda_max = same_sign ? 1.0 : std::ceil(need * 1.01 * 10) / 10;
    std::vector<double> lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    if (lambda_max > 0.9) lambdas.push_back(lambda_max);
    const SearchSpace space(lambdas);
    const auto top = task_arithmetic(deltas, MergeSpec("task_arithmetic", lambda_max)).at("w");
    bool premise = true;
    for (std::size_t p = 0; p < n; ++p) {
      premise = premise && sum[p] != 0.0f;
      for (const auto& tv : deltas) premise = premise && std::fabs(top[p]) >= std::fabs(tv.delta.at("w")[p]);
    }
    if (!premise) continue;
    const auto r = weave(pre, ft, MergeSpec("task_arithmetic", 1.0), space, PoolSpec{Pooling::magmax, 0, true});
    std::vector<float> expect(n);
    for (std::size_t p = 0; p < n; ++p) expect[p] = base[p] + top[p];
    o.require(r.merged.at("w").data() == expect, "instance " + std::to_string(i) + " did not collapse");
    ++checked;
  }
  o.require(checked >= 50, "only " + std::to_string(checked) + " instances satisfied the premise");
  if (o.pass) o.detail = std::to_string(checked) + " constructed instances (same-sign and mixed-sign)";
  return o;
}

// 7. Thread-count invariance with DARE + random pooling.
Outcome parallel_determinism() {
  Outcome o;
  std::mt19937_64 rng(1007);
  std::vector<std::pair<std::string, Shape>> schema;
  for (int i = 0; i < 24; ++i) schema.emplace_back("layers." + std::to_string(i) + ".w", Shape{16, 64 + std::uint64_t(i)});
  const auto pre = random_map(rng, schema);
  std::vector<TensorMap> ft;
  for (int t = 0; t < 4; ++t) ft.push_back(add(pre, random_map(rng, schema, 0.01f)));
  MergeParams p;
  p.drop_rate = 0.7;
  const MergeSpec spec("dare", 1.0, p, 2718);
  const PoolSpec pool{Pooling::random, 31415, true};
  std::string reference;
  for (unsigned workers : {1u, 4u, 8u}) {
    const auto bytes = serialize_checkpoint(weave(pre, ft, spec, default_search_space("dare"), pool, {workers, nullptr}).merged);
    if (reference.empty()) reference = bytes;
    o.require(bytes == reference, "output at " + std::to_string(workers) + " workers differs");
  }
  if (o.pass) o.detail = "byte-identical checkpoints at 1, 4, 8 workers (" + std::to_string(reference.size()) + " bytes)";
  return o;
}

// 8. Default search spaces.
Outcome default_spaces() {
  Outcome o;
  const std::vector<double> general = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  const std::vector<double> ties_range = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
                                          0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
  for (const char* m : {"task_arithmetic", "dare", "breadcrumbs", "magmax"})
    o.require(default_search_space(m).lambdas() == general, std::string(m) + " range is not 0.1..1.0");
  o.require(default_search_space("ties").lambdas() == ties_range, "ties range is not 0.1..1.5");
  if (o.pass) o.detail = "10 values 0.1-1.0 (TA, DARE, Breadcrumbs, MagMax); 15 values 0.1-1.5 (TIES)";
  return o;
}

// 9. Checkpoint I/O.
Outcome checkpoint_io() {
  Outcome o;
  std::mt19937_64 rng(1009);
  TempDir dir("accept_io");
  for (int i = 0; i < 30; ++i) {
    auto map = random_map(rng, random_schema(rng, 5'000), 100.0f);
    write_checkpoint(map, dir / "m.safetensors");
    o.require(bitwise_equal(read_checkpoint(dir / "m.safetensors"), map), "F32 round trip not bitwise");
  }
  const auto fx = read_checkpoint(WW_FIXTURES_DIR "/third_party_mixed.safetensors");
  o.require(fx.names() == std::vector<std::string>{"empty", "half", "scalar", "single"}, "fixture tensor names");
  o.require(fx.at("half").data() == std::vector<float>{1.0f, -2.0f, 0.5f, 65504.0f, 0x1.0p-14f, 0x1.0p-24f},
            "fixture F16 values");
  o.require(fx.at("single").data() == std::vector<float>{1.5f, -0.25f, 3.0f, 1e-30f}, "fixture F32 values");
  o.require(fx.at("scalar").size() == 1 && fx.at("scalar")[0] == 7.0f, "fixture scalar");
  o.require(fx.at("empty").shape() == Shape{0, 3}, "fixture empty tensor");
  o.require(fx.metadata().at("author") == "fixture", "fixture metadata");
  const auto pre = read_checkpoint(WW_FIXTURES_DIR "/pretrained.safetensors");
  o.require(pre.size() == 4 && pre.total_elements() == 24 + 6 + 12 + 1, "third-party pretrained fixture");
  if (o.pass) o.detail = "30 random F32 round trips bitwise; reference-writer fixtures (F16/F32/scalar/empty) decode";
  return o;
}

// 10. Analysis.
Outcome analysis() {
  Outcome o;
  std::mt19937_64 rng(1010);
  for (int i = 0; i < 30; ++i) {
    const auto schema = random_schema(rng, 3'000);
    std::vector<TaskVector> tv;
    for (int t = 0; t < 2 + i % 5; ++t) tv.push_back({random_map(rng, schema), "t" + std::to_string(t), std::size_t(t + 1)});
    const auto m = cosine_matrix(tv);
    for (std::size_t a = 0; a < tv.size(); ++a) {
      o.require(m.values[a][a] == 1.0, "diagonal not 1");
      for (std::size_t b = 0; b < tv.size(); ++b) {
        o.require(m.values[a][b] == m.values[b][a], "cosine matrix not symmetric");
        o.require(std::fabs(m.values[a][b]) <= 1.0 + 1e-6, "cosine entry out of bounds");
      }
    }
  }
  const auto table = read_accuracy_csv(WW_FIXTURES_DIR "/accuracy_10tasks.csv");
  const std::map<double, std::size_t> expect = {{0.2, 1}, {0.4, 3}, {0.6, 3}, {0.8, 1}, {1.0, 2}};
  const auto h = best_lambda_histogram(table);
  o.require(h.bins == expect && h.total == 10, "10-task histogram does not match hand-computed bins");
  for (auto [a, b] : {std::pair{0.5, 0.25}, std::pair{2.0, -10.0}, std::pair{0.25, 3.0}}) {
    auto rescaled = table;
    for (auto& r : rescaled.rows) r.accuracy = a * r.accuracy + b;
    o.require(best_lambda_histogram(rescaled).bins == expect, "histogram changed under affine rescaling");
  }
  if (o.pass) o.detail = "30 random cosine matrices; 10-task CSV bins {0.2:1,0.4:3,0.6:3,0.8:1,1:2}; 3 affine rescalings";
  return o;
}

// 11. Scripted CLI session, run twice.
Outcome cli_session(double suite_seconds_so_far) {
  Outcome o;
  const auto t0 = Clock::now();
  std::vector<std::string> outputs[2];
  for (int run = 0; run < 2; ++run) {
    TempDir dir("accept_cli");
    auto p = [&](const std::string& n) { return (dir / n).string(); };
    const std::vector<std::string> ft = {fixture("task_a.safetensors"), fixture("task_b.safetensors"),
                                         fixture("task_c.safetensors")};
    auto with_inputs = [&](std::vector<std::string> args) {
      args.insert(args.end(), {"--pretrained", fixture("pretrained.safetensors"), "--finetuned"});
      args.insert(args.end(), ft.begin(), ft.end());
      return args;
    };
    const std::vector<std::vector<std::string>> session = {
        with_inputs({"deltas", "--out-dir", p("deltas")}),
        with_inputs({"weave", "--method", "ties", "--keep-fraction", "0.3", "--out", p("woven.safetensors")}),
        with_inputs({"weave", "--method", "dare", "--pooling", "random", "--seed", "7", "--threads", "4", "--out",
                     p("woven_random.safetensors")}),
        {"inspect", p("woven.safetensors")},
        {"analyze", "cosine", "--deltas", p("deltas/task_a.delta.safetensors"), p("deltas/task_b.delta.safetensors"),
         p("deltas/task_c.delta.safetensors"), "--out", p("cosine.json")},
        {"analyze", "best-lambda", "--csv", fixture("accuracy_10tasks.csv"), "--out", p("hist.json")},
        with_inputs({"analyze", "sweep", "--method", "magmax", "--lambda-range", "0.5:1.0:0.5", "--out-dir", p("sweep")}),
    };
    for (const auto& cmd : session) {
      const auto r = run_cli(cmd, dir.path());
      o.require(r.code == 0, "'" + cmd[0] + "' exited " + std::to_string(r.code) + ": " + r.err);
      // the scratch directory differs between runs, so it is not part of the comparison
      std::string out = r.out;
      for (auto at = out.find(dir.path().string()); at != std::string::npos; at = out.find(dir.path().string()))
        out.replace(at, dir.path().string().size(), "<dir>");
      outputs[run].push_back(out);
    }
    for (const char* f : {"deltas/task_a.delta.safetensors", "deltas/task_b.delta.safetensors",
                          "deltas/task_c.delta.safetensors", "woven.safetensors", "woven_random.safetensors",
                          "cosine.json", "hist.json", "sweep/magmax_lambda0.5.safetensors",
                          "sweep/magmax_lambda1.safetensors", "sweep/manifest.json"})
      outputs[run].push_back(slurp(dir / f));
    for (const char* f : {"woven.report.json", "woven_random.report.json"}) {
      auto j = nlohmann::json::parse(slurp(dir / f));
      j.erase("wall_time_ms");  // timing is the only field expected to vary
      outputs[run].push_back(j.dump());
    }
  }
  o.require(outputs[0] == outputs[1], "outputs differ between the two runs");
  const double total = suite_seconds_so_far + seconds_since(t0);
  o.require(total <= 120.0, "acceptance wall time " + std::to_string(total) + " s exceeds 2 minutes");
  if (o.pass)
    o.detail = std::to_string(outputs[0].size()) + " outputs byte-stable across two sessions; suite time " +
               std::to_string(total) + " s";
  return o;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"AC1 oracle equivalence (streaming weave vs naive)", oracle_equivalence},
      {"AC2 closed form TA + avg (A* and A)", closed_form},
      {"AC3 bitwise reductions", reductions},
      {"AC4 DARE drop rate and seed average", dare_statistics},
      {"AC5 TIES sign safety", ties_sign_safety},
      {"AC6 MagMax pooling collapse", magmax_collapse},
      {"AC7 determinism at 1/4/8 workers", parallel_determinism},
      {"AC8 default search spaces", default_spaces},
      {"AC9 checkpoint I/O", checkpoint_io},
      {"AC10 analysis", analysis},
      {"AC11 end-to-end CLI session", [&] { return cli_session(seconds_since(t0)); }},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failed += !out.pass;
    std::printf("[%s] %s: %s\n", out.pass ? "PASS" : "FAIL", c.name, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed in %.1f s\n", criteria.size() - failed, criteria.size(), seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
