#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyloc/tensor.hpp"

namespace tinyloc::io {

/// Binary model/dataset container ("TLOC"): a little-endian, byte-exact
/// format holding a string metadata block plus a table of named tensors,
/// each with an explicit dtype tag, shape, optional quantization records,
/// and raw payload. Saving the same content twice yields identical bytes.

inline constexpr char kMagic[4] = {'T', 'L', 'O', 'C'};
inline constexpr uint16_t kFormatVersion = 1;

enum class DtypeTag : uint8_t { f32 = 1, f64 = 2, f16 = 3, u8 = 4, u32 = 5 };

inline std::size_t dtype_size(uint8_t tag) {
  switch (DtypeTag(tag)) {
    case DtypeTag::f32:
      return 4;
    case DtypeTag::f64:
      return 8;
    case DtypeTag::f16:
      return 2;
    case DtypeTag::u8:
      return 1;
    case DtypeTag::u32:
      return 4;
  }
  throw std::runtime_error("container: unknown dtype tag " +
                           std::to_string(int(tag)));
}

/// One 8-byte quantization record: fp32 scale + int32 zero point.
struct QuantRecord {
  float scale = 1.0f;
  int32_t zero_point = 0;
};

struct TensorEntry {
  std::string name;
  uint8_t dtype = uint8_t(DtypeTag::f32);
  std::vector<uint64_t> shape;
  std::vector<QuantRecord> quant;  // empty unless the payload is quantized
  std::vector<uint8_t> payload;    // little-endian element bytes

  uint64_t element_count() const {
    if (shape.empty()) return 0;
    uint64_t n = 1;
    for (const uint64_t d : shape) {
      if (d != 0 && n > UINT64_MAX / d)
        throw std::runtime_error("container: tensor '" + name +
                                 "' shape overflows");
      n *= d;
    }
    return n;
  }
};

struct Container {
  uint16_t version = kFormatVersion;
  std::map<std::string, std::string> meta;
  std::vector<TensorEntry> tensors;

  const TensorEntry* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  const TensorEntry& require(const std::string& name) const {
    const TensorEntry* t = find(name);
    if (t == nullptr)
      throw std::runtime_error("container: missing tensor '" + name + "'");
    return *t;
  }

  const std::string& meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end())
      throw std::runtime_error("container: missing metadata key '" + key +
                               "'");
    return it->second;
  }
};

namespace detail {

inline void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(uint8_t(v & 0xff));
  b.push_back(uint8_t(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<uint8_t>& b, float v) {
  uint32_t u = 0;
  std::memcpy(&u, &v, 4);
  put_u32(b, u);
}

inline void put_i32(std::vector<uint8_t>& b, int32_t v) {
  put_u32(b, uint32_t(v));
}

inline void put_str(std::vector<uint8_t>& b, const std::string& s) {
  put_u32(b, uint32_t(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

struct Cursor {
  const uint8_t* p;
  std::size_t n;
  std::size_t off = 0;

  void need(std::size_t k, const char* what) const {
    if (off + k > n)
      throw std::runtime_error(std::string("container: truncated while "
                                           "reading ") +
                               what);
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return p[off++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(p[off]) | uint16_t(p[off + 1]) << 8;
    off += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[off + std::size_t(i)]) << (8 * i);
    off += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[off + std::size_t(i)]) << (8 * i);
    off += 8;
    return v;
  }
  float f32(const char* what) {
    const uint32_t u = u32(what);
    float v = 0;
    std::memcpy(&v, &u, 4);
    return v;
  }
  int32_t i32(const char* what) { return int32_t(u32(what)); }
  std::string str(const char* what) {
    const uint32_t len = u32(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(p + off), len);
    off += len;
    return s;
  }
  std::vector<uint8_t> bytes(uint64_t k, const char* what) {
    if (k > n - off)
      throw std::runtime_error(std::string("container: truncated while "
                                           "reading ") +
                               what);
    std::vector<uint8_t> out(p + off, p + off + k);
    off += std::size_t(k);
    return out;
  }
};

}  // namespace detail

inline std::vector<uint8_t> save_bytes(const Container& c) {
  std::vector<uint8_t> b;
  b.insert(b.end(), kMagic, kMagic + 4);
  detail::put_u16(b, c.version);
  detail::put_u32(b, uint32_t(c.meta.size()));
  for (const auto& [key, value] : c.meta) {
    detail::put_str(b, key);
    detail::put_str(b, value);
  }
  detail::put_u32(b, uint32_t(c.tensors.size()));
  for (const auto& t : c.tensors) {
    if (t.payload.size() != t.element_count() * dtype_size(t.dtype))
      throw std::runtime_error("container: tensor '" + t.name +
                               "' payload does not match dtype x shape");
    detail::put_str(b, t.name);
    detail::put_u8(b, t.dtype);
    detail::put_u8(b, uint8_t(t.shape.size()));
    for (const uint64_t d : t.shape) detail::put_u64(b, d);
    detail::put_u32(b, uint32_t(t.quant.size()));
    for (const auto& q : t.quant) {
      detail::put_f32(b, q.scale);
      detail::put_i32(b, q.zero_point);
    }
    detail::put_u64(b, uint64_t(t.payload.size()));
    b.insert(b.end(), t.payload.begin(), t.payload.end());
  }
  return b;
}

inline Container load_bytes(const uint8_t* data, std::size_t len) {
  detail::Cursor cur{data, len};
  cur.need(4, "magic");
  if (std::memcmp(data, kMagic, 4) != 0)
    throw std::runtime_error("container: bad magic (not a TLOC file)");
  cur.off = 4;
  Container c;
  c.version = cur.u16("version");
  if (c.version != kFormatVersion)
    throw std::runtime_error("container: unsupported format version " +
                             std::to_string(c.version));
  const uint32_t meta_count = cur.u32("metadata count");
  for (uint32_t i = 0; i < meta_count; ++i) {
    std::string key = cur.str("metadata key");
    std::string value = cur.str("metadata value");
    if (!c.meta.emplace(std::move(key), std::move(value)).second)
      throw std::runtime_error("container: duplicate metadata key");
  }
  const uint32_t tensor_count = cur.u32("tensor count");
  for (uint32_t i = 0; i < tensor_count; ++i) {
    TensorEntry t;
    t.name = cur.str("tensor name");
    if (c.find(t.name) != nullptr)
      throw std::runtime_error("container: duplicate tensor '" + t.name +
                               "'");
    t.dtype = cur.u8("dtype tag");
    dtype_size(t.dtype);  // validates the tag
    const uint8_t rank = cur.u8("rank");
    for (uint8_t r = 0; r < rank; ++r) t.shape.push_back(cur.u64("dim"));
    const uint32_t quant_count = cur.u32("quant record count");
    for (uint32_t q = 0; q < quant_count; ++q) {
      QuantRecord rec;
      rec.scale = cur.f32("quant scale");
      rec.zero_point = cur.i32("quant zero point");
      t.quant.push_back(rec);
    }
    const uint64_t payload_len = cur.u64("payload length");
    if (payload_len != t.element_count() * dtype_size(t.dtype))
      throw std::runtime_error("container: tensor '" + t.name +
                               "' payload does not match dtype x shape");
    t.payload = cur.bytes(payload_len, "payload");
    c.tensors.push_back(std::move(t));
  }
  if (cur.off != len)
    throw std::runtime_error("container: trailing bytes after tensor table");
  return c;
}

inline Container load_bytes(const std::vector<uint8_t>& b) {
  return load_bytes(b.data(), b.size());
}

inline void save_file(const Container& c, const std::string& path) {
  const auto bytes = save_bytes(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("container: cannot open '" + path +
                             "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("container: write failed on '" + path + "'");
}

inline Container load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("container: cannot open '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return load_bytes(bytes.data(), bytes.size());
}

/// FNV-1a 64-bit, used for deterministic content checksums.
inline uint64_t fnv1a64(const std::vector<uint8_t>& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (const uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// ---- tensor <-> entry conversion ----

inline TensorEntry pack_tensor(const std::string& name,
                               const Tensor<float>& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = uint8_t(DtypeTag::f32);
  e.shape.assign(t.shape.begin(), t.shape.end());
  e.payload.reserve(t.count() * 4);
  for (const float v : t.data) detail::put_f32(e.payload, v);
  return e;
}

inline TensorEntry pack_tensor(const std::string& name,
                               const Tensor<uint8_t>& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = uint8_t(DtypeTag::u8);
  e.shape.assign(t.shape.begin(), t.shape.end());
  e.payload = t.data;
  return e;
}

/// Raw binary16 payloads travel as uint16 tensors.
inline TensorEntry pack_half(const std::string& name,
                             const Tensor<uint16_t>& t) {
  TensorEntry e;
  e.name = name;
  e.dtype = uint8_t(DtypeTag::f16);
  e.shape.assign(t.shape.begin(), t.shape.end());
  e.payload.reserve(t.count() * 2);
  for (const uint16_t v : t.data) detail::put_u16(e.payload, v);
  return e;
}

inline TensorEntry pack_u32(const std::string& name,
                            const std::vector<uint32_t>& vals) {
  TensorEntry e;
  e.name = name;
  e.dtype = uint8_t(DtypeTag::u32);
  e.shape = {uint64_t(vals.size())};
  e.payload.reserve(vals.size() * 4);
  for (const uint32_t v : vals) detail::put_u32(e.payload, v);
  return e;
}

namespace detail {

inline std::vector<std::size_t> entry_shape(const TensorEntry& e) {
  std::vector<std::size_t> s;
  for (const uint64_t d : e.shape) s.push_back(std::size_t(d));
  return s;
}

}  // namespace detail

inline Tensor<float> unpack_f32(const TensorEntry& e) {
  if (DtypeTag(e.dtype) != DtypeTag::f32)
    throw std::runtime_error("container: tensor '" + e.name +
                             "' is not fp32");
  Tensor<float> t(detail::entry_shape(e));
  detail::Cursor cur{e.payload.data(), e.payload.size()};
  for (auto& v : t.data) v = cur.f32("fp32 element");
  return t;
}

inline Tensor<uint8_t> unpack_u8(const TensorEntry& e) {
  if (DtypeTag(e.dtype) != DtypeTag::u8)
    throw std::runtime_error("container: tensor '" + e.name +
                             "' is not uint8");
  Tensor<uint8_t> t(detail::entry_shape(e));
  t.data = e.payload;
  return t;
}

inline Tensor<uint16_t> unpack_f16(const TensorEntry& e) {
  if (DtypeTag(e.dtype) != DtypeTag::f16)
    throw std::runtime_error("container: tensor '" + e.name +
                             "' is not binary16");
  Tensor<uint16_t> t(detail::entry_shape(e));
  detail::Cursor cur{e.payload.data(), e.payload.size()};
  for (auto& v : t.data) v = cur.u16("binary16 element");
  return t;
}

inline std::vector<uint32_t> unpack_u32(const TensorEntry& e) {
  if (DtypeTag(e.dtype) != DtypeTag::u32)
    throw std::runtime_error("container: tensor '" + e.name +
                             "' is not uint32");
  std::vector<uint32_t> out;
  detail::Cursor cur{e.payload.data(), e.payload.size()};
  for (std::size_t i = 0; i < e.payload.size() / 4; ++i)
    out.push_back(cur.u32("uint32 element"));
  return out;
}

}  // namespace tinyloc::io
