#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "tensor.hpp"

namespace ww {

// Delta weights of one fine-tuned checkpoint: finetuned - pretrained.
struct TaskVector {
  TensorMap delta;
  std::string source_name;
  std::size_t index = 0;  // 1-based position in the task list
};

inline std::vector<TaskVector> compute_deltas(const TensorMap& pretrained,
                                              std::span<const TensorMap> finetuned,
                                              std::span<const std::string> labels = {}) {
  std::vector<TaskVector> out;
  out.reserve(finetuned.size());
  for (std::size_t t = 0; t < finetuned.size(); ++t) {
    const std::string label = t < labels.size() ? labels[t] : "task" + std::to_string(t + 1);
    require_compatible(pretrained, finetuned[t], label);
    TaskVector tv{{}, label, t + 1};
    for (const auto& [name, base] : pretrained) {
      const auto ft = finetuned[t].at(name).values();
      const auto pre = base.values();
      std::vector<float> d(pre.size());
      for (std::size_t p = 0; p < d.size(); ++p) d[p] = ft[p] - pre[p];
      tv.delta.insert(name, Tensor(base.shape(), std::move(d)));
    }
    out.push_back(std::move(tv));
  }
  return out;
}

// Elementwise sum_i coefficients[i] * vectors[i], accumulated in list order.
inline TensorMap axpy_sum(std::span<const TensorMap> vectors, std::span<const float> coefficients) {
  if (vectors.empty()) throw ValidationError("axpy_sum: no vectors");
  if (vectors.size() != coefficients.size())
    throw ValidationError("axpy_sum: " + std::to_string(vectors.size()) + " vectors but " +
                          std::to_string(coefficients.size()) + " coefficients");
  for (std::size_t i = 1; i < vectors.size(); ++i) require_compatible(vectors[0], vectors[i], "axpy_sum");

  TensorMap out;
  for (const auto& [name, first] : vectors[0]) {
    std::vector<float> acc(first.size(), 0.0f);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto v = vectors[i].at(name).values();
      const float c = coefficients[i];
      for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += c * v[p];
    }
    out.insert(name, Tensor(first.shape(), std::move(acc)));
  }
  return out;
}

inline TensorMap add(const TensorMap& base, const TensorMap& delta) {
  require_compatible(base, delta, "add");
  TensorMap out;
  for (const auto& [name, b] : base) {
    const auto d = delta.at(name).values();
    std::vector<float> v(b.size());
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = b[p] + d[p];
    out.insert(name, Tensor(b.shape(), std::move(v), b.dtype()));
  }
  return out;
}

struct SimilarityMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;

  nlohmann::json to_json() const { return {{"labels", labels}, {"values", values}}; }
};

// Whole-model cosine similarity: every task vector is flattened over all
// tensors in canonical name order. Dot products accumulate in double.
// A zero vector has similarity 0 with everything except itself (1).
inline SimilarityMatrix cosine_matrix(std::span<const TaskVector> vectors) {
  if (vectors.empty()) throw ValidationError("cosine_matrix: no task vectors");
  for (std::size_t i = 1; i < vectors.size(); ++i)
    require_compatible(vectors[0].delta, vectors[i].delta, "cosine_matrix");

  const std::size_t n = vectors.size();
  std::vector<std::vector<double>> gram(n, std::vector<double>(n, 0.0));
  for (const auto& [name, _] : vectors[0].delta) {
    std::vector<std::span<const float>> slices;
    for (const auto& tv : vectors) slices.push_back(tv.delta.at(name).values());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t p = 0; p < slices[i].size(); ++p)
          dot += static_cast<double>(slices[i][p]) * static_cast<double>(slices[j][p]);
        gram[i][j] += dot;
      }
    }
  }

  SimilarityMatrix m;
  m.values.assign(n, std::vector<double>(n, 0.0));
  for (const auto& tv : vectors) m.labels.push_back(tv.source_name);
  for (std::size_t i = 0; i < n; ++i) {
    m.values[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ni = std::sqrt(gram[i][i]);
      const double nj = std::sqrt(gram[j][j]);
      double c = 0.0;
      if (ni > 0.0 && nj > 0.0) c = std::clamp(gram[i][j] / (ni * nj), -1.0, 1.0);
      m.values[i][j] = m.values[j][i] = c;
    }
  }
  return m;
}

}  // namespace ww
