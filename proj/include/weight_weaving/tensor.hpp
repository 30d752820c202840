#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"

namespace ww {

enum class DType { F32, F16 };

inline std::string_view dtype_name(DType d) {
  return d == DType::F16 ? "F16" : "F32";
}

inline DType parse_dtype(std::string_view s) {
  if (s == "F32") return DType::F32;
  if (s == "F16") return DType::F16;
  throw FormatError("unsupported dtype '" + std::string(s) + "'");
}

inline std::size_t dtype_size(DType d) { return d == DType::F16 ? 2 : 4; }

using Shape = std::vector<std::uint64_t>;

inline std::uint64_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                         [](std::uint64_t a, std::uint64_t b) { return a * b; });
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// A dense row-major tensor. Values are always held as float; `dtype` records
// how the tensor was (or will be) stored on disk.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<float> data, DType dtype = DType::F32)
      : dtype_(dtype), shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ValidationError("tensor data has " + std::to_string(data_.size()) +
                            " elements but shape " + shape_string(shape_) +
                            " needs " + std::to_string(element_count(shape_)));
    }
  }

  static Tensor zeros(Shape shape, DType dtype = DType::F32) {
    const auto n = element_count(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f), dtype);
  }

  DType dtype() const { return dtype_; }
  void set_dtype(DType d) { dtype_ = d; }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }
  const std::vector<float>& data() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Value equality: same shape and identical floats (dtype not compared).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  DType dtype_ = DType::F32;
  Shape shape_;
  std::vector<float> data_;
};

struct FingerprintEntry {
  std::string name;
  DType dtype;
  Shape shape;
};

// Ordered (name, dtype, shape) listing. Equality ignores dtype: two maps are
// merge-compatible iff their fingerprints compare equal.
struct SchemaFingerprint {
  std::vector<FingerprintEntry> entries;

  friend bool operator==(const SchemaFingerprint& a, const SchemaFingerprint& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      if (a.entries[i].name != b.entries[i].name ||
          a.entries[i].shape != b.entries[i].shape)
        return false;
    }
    return true;
  }
};

// Name -> tensor dictionary; iteration is lexicographic by name.
class TensorMap {
 public:
  using Entries = std::map<std::string, Tensor, std::less<>>;
  using Metadata = std::map<std::string, std::string, std::less<>>;

  TensorMap() = default;

  void insert(std::string name, Tensor t) {
    auto [it, inserted] = entries_.emplace(std::move(name), std::move(t));
    if (!inserted) throw ValidationError("duplicate tensor name '" + it->first + "'");
  }
  void insert_or_assign(std::string name, Tensor t) {
    entries_.insert_or_assign(std::move(name), std::move(t));
  }

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

  const Tensor& at(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw SchemaMismatch("no tensor named '" + std::string(name) + "'");
    return it->second;
  }
  Tensor& at(std::string_view name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw SchemaMismatch("no tensor named '" + std::string(name) + "'");
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::uint64_t total_elements() const {
    std::uint64_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  const Metadata& metadata() const { return metadata_; }
  Metadata& metadata() { return metadata_; }

  // Tensor contents only; metadata is not part of equality.
  friend bool operator==(const TensorMap& a, const TensorMap& b) {
    return a.entries_ == b.entries_;
  }

 private:
  Entries entries_;
  Metadata metadata_;
};

inline SchemaFingerprint fingerprint(const TensorMap& map) {
  SchemaFingerprint fp;
  fp.entries.reserve(map.size());
  for (const auto& [name, t] : map) fp.entries.push_back({name, t.dtype(), t.shape()});
  return fp;
}

// Throws SchemaMismatch naming the first tensor that differs.
inline void require_compatible(const TensorMap& reference, const TensorMap& other,
                               std::string_view what = "checkpoint") {
  auto ai = reference.begin();
  auto bi = other.begin();
  for (; ai != reference.end() && bi != other.end(); ++ai, ++bi) {
    if (ai->first != bi->first) {
      const auto& missing = ai->first < bi->first ? ai->first : bi->first;
      throw SchemaMismatch(std::string(what) + ": tensor '" + missing +
                           "' is not present in both checkpoints");
    }
    if (ai->second.shape() != bi->second.shape()) {
      throw SchemaMismatch(std::string(what) + ": tensor '" + ai->first + "' has shape " +
                           shape_string(bi->second.shape()) + ", expected " +
                           shape_string(ai->second.shape()));
    }
  }
  if (ai != reference.end())
    throw SchemaMismatch(std::string(what) + ": missing tensor '" + ai->first + "'");
  if (bi != other.end())
    throw SchemaMismatch(std::string(what) + ": unexpected tensor '" + bi->first + "'");
}

}  // namespace ww
