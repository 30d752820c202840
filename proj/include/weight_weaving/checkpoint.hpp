#pragma once

// Reader/writer for the safetensors container layout:
//
//   [u64 LE header length N][N bytes UTF-8 JSON header][raw payload]
//
// The header maps tensor name -> {"dtype", "shape", "data_offsets"} with
// offsets relative to the payload start, plus an optional "__metadata__"
// string map. Only F32 and F16 are supported.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "half.hpp"
#include "tensor.hpp"

namespace ww {

enum class DTypePolicy { keep, force_f32 };

// Metadata key under which force_f32 records tensors that were not F32.
inline constexpr std::string_view kSourceDTypesKey = "weight_weaving.source_dtypes";

namespace detail {

inline constexpr std::uint64_t kMaxHeaderBytes = 100ull * 1024 * 1024;

inline std::uint64_t load_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void store_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void decode_payload(const unsigned char* src, DType dtype, std::span<float> dst) {
  if (dtype == DType::F32) {
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(dst.data(), src, dst.size() * 4);
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const unsigned char* p = src + 4 * i;
        std::uint32_t b = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                          std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
        dst[i] = std::bit_cast<float>(b);
      }
    }
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const unsigned char* p = src + 2 * i;
      dst[i] = half::to_float(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
    }
  }
}

inline void encode_payload(std::span<const float> src, DType dtype, std::string& out) {
  if (dtype == DType::F32) {
    for (float v : src) {
      const auto b = std::bit_cast<std::uint32_t>(v);
      for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((b >> (8 * k)) & 0xFF));
    }
  } else {
    for (float v : src) {
      const auto h = half::from_float(v);
      out.push_back(static_cast<char>(h & 0xFF));
      out.push_back(static_cast<char>(h >> 8));
    }
  }
}

}  // namespace detail

// Decodes a whole container held in memory.
inline TensorMap parse_checkpoint(std::string_view bytes) {
  using nlohmann::json;
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8) throw FormatError("malformed header: file shorter than 8 bytes");

  const std::uint64_t header_len = detail::load_u64_le(raw);
  if (header_len > detail::kMaxHeaderBytes || header_len > bytes.size() - 8)
    throw FormatError("malformed header: header length " + std::to_string(header_len) +
                      " exceeds file size " + std::to_string(bytes.size()));

  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed header JSON: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("malformed header JSON: top level is not an object");

  const std::uint64_t payload_size = bytes.size() - 8 - header_len;
  const unsigned char* payload = raw + 8 + header_len;

  struct Span {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Span> spans;
  TensorMap map;

  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") {
      if (!info.is_object()) throw FormatError("malformed header: __metadata__ is not an object");
      for (const auto& [k, v] : info.items()) {
        if (!v.is_string())
          throw FormatError("malformed header: __metadata__ value for '" + k + "' is not a string");
        map.metadata()[k] = v.get<std::string>();
      }
      continue;
    }
    if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
        !info.contains("data_offsets"))
      throw FormatError("malformed header: entry '" + name + "' lacks dtype/shape/data_offsets");
    if (!info["dtype"].is_string())
      throw FormatError("malformed header: dtype of '" + name + "' is not a string");
    const DType dtype = parse_dtype(info["dtype"].get<std::string>());

    const auto& jshape = info["shape"];
    const auto& joff = info["data_offsets"];
    if (!jshape.is_array() || !joff.is_array() || joff.size() != 2)
      throw FormatError("malformed header: bad shape or data_offsets for '" + name + "'");
    Shape shape;
    for (const auto& d : jshape) {
      if (!d.is_number_unsigned())
        throw FormatError("malformed header: non-integer extent in shape of '" + name + "'");
      shape.push_back(d.get<std::uint64_t>());
    }
    if (!joff[0].is_number_unsigned() || !joff[1].is_number_unsigned())
      throw FormatError("malformed header: non-integer data_offsets for '" + name + "'");
    const auto begin = joff[0].get<std::uint64_t>();
    const auto end = joff[1].get<std::uint64_t>();
    const std::uint64_t n = element_count(shape);
    if (begin > end || end - begin != n * dtype_size(dtype))
      throw FormatError("malformed header: data_offsets of '" + name +
                        "' do not match dtype and shape");
    if (end > payload_size)
      throw FormatError("malformed header: data_offsets of '" + name +
                        "' are out of bounds (truncated file?)");
    spans.push_back({begin, end, name});

    std::vector<float> values(n);
    detail::decode_payload(payload + begin, dtype, values);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]))
        throw FormatError("non-finite value in tensor '" + name + "' at flat index " +
                          std::to_string(i));
    }
    map.insert(name, Tensor(std::move(shape), std::move(values), dtype));
  }

  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.begin < b.begin || (a.begin == b.begin && a.end < b.end); });
  std::uint64_t covered = 0;
  for (const auto& s : spans) {
    if (s.begin < covered)
      throw FormatError("malformed header: data_offsets of '" + s.name + "' overlap another tensor");
    covered = s.end;
  }
  if (covered != payload_size)
    throw FormatError("malformed header: payload is " + std::to_string(payload_size) +
                      " bytes but tensors cover " + std::to_string(covered));
  return map;
}

inline TensorMap read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  try {
    return parse_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Encodes `map` in canonical (lexicographic) tensor order. The header is
// space-padded to a multiple of 8 bytes so the payload stays aligned.
inline std::string serialize_checkpoint(const TensorMap& map,
                                        DTypePolicy policy = DTypePolicy::force_f32) {
  using nlohmann::json;
  json header = json::object();
  json source_dtypes = json::object();
  std::uint64_t offset = 0;
  std::string payload;

  for (const auto& [name, t] : map) {
    if (!t.all_finite()) throw ValidationError("non-finite value in tensor '" + name + "'");
    const DType out_dtype = policy == DTypePolicy::keep ? t.dtype() : DType::F32;
    if (out_dtype != t.dtype()) source_dtypes[name] = std::string(dtype_name(t.dtype()));
    if (out_dtype == DType::F16) {
      for (float v : t.values())
        if (std::fabs(v) >= 65520.0f)
          throw ValidationError("value in tensor '" + name + "' overflows F16");
    }
    const std::uint64_t bytes = t.size() * dtype_size(out_dtype);
    header[name] = {{"dtype", std::string(dtype_name(out_dtype))},
                    {"shape", t.shape()},
                    {"data_offsets", {offset, offset + bytes}}};
    detail::encode_payload(t.values(), out_dtype, payload);
    offset += bytes;
  }

  json meta = json::object();
  for (const auto& [k, v] : map.metadata()) meta[k] = v;
  if (!source_dtypes.empty()) meta[std::string(kSourceDTypesKey)] = source_dtypes.dump();
  if (!meta.empty()) header["__metadata__"] = meta;

  std::string header_text = header.dump();
  header_text.append((8 - header_text.size() % 8) % 8, ' ');

  std::string out;
  out.reserve(8 + header_text.size() + payload.size());
  detail::store_u64_le(out, header_text.size());
  out += header_text;
  out += payload;
  return out;
}

inline void write_checkpoint(const TensorMap& map, const std::filesystem::path& path,
                             DTypePolicy policy = DTypePolicy::force_f32) {
  const std::string bytes = serialize_checkpoint(map, policy);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace ww
