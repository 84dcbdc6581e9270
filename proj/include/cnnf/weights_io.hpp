#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "cnnf/error.hpp"
#include "cnnf/tensor.hpp"

namespace cnnf {

// Binary layout, little-endian, no padding:
//   "CNNF" | u32 version | u32 record count | records...
//   record: u32 name length | name bytes (UTF-8) | u8 dtype | u8 ndim | u32 dims[ndim] | payload
// dtype 1 = f32, 2 = f64; payload is product(dims) elements.

inline constexpr std::uint32_t kFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

inline std::size_t dtype_width(DType d) { return d == DType::f32 ? 4 : 8; }

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "tensor records hold f32 or f64");
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <class T>
using bits_t = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

}  // namespace detail

template <class T>
TensorRecord make_record(std::string name, const Tensor4<T>& t) {
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = dtype_of<T>();
  const Shape4& s = t.shape();
  r.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w),
            static_cast<std::uint32_t>(s.c)};
  r.payload.reserve(t.size() * sizeof(T));
  for (T v : t.data()) detail::put_le(r.payload, std::bit_cast<detail::bits_t<T>>(v));
  return r;
}

template <class T>
TensorRecord make_record(std::string name, std::span<const T> values, std::vector<std::uint32_t> dims) {
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = dtype_of<T>();
  r.dims = std::move(dims);
  if (r.element_count() != values.size()) throw ShapeError("record '" + r.name + "': dims do not match value count");
  for (T v : values) detail::put_le(r.payload, std::bit_cast<detail::bits_t<T>>(v));
  return r;
}

template <class T>
std::vector<T> record_values(const TensorRecord& r) {
  if (r.dtype != dtype_of<T>())
    throw PrecisionMismatchError("record '" + r.name + "' holds " + (r.dtype == DType::f32 ? "f32" : "f64") +
                                 " data but " + (dtype_of<T>() == DType::f32 ? "f32" : "f64") + " was requested");
  std::vector<T> out(r.element_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::bit_cast<T>(detail::get_le<detail::bits_t<T>>(r.payload.data() + i * sizeof(T)));
  return out;
}

// Records with fewer than four dims are left-padded with ones.
template <class T>
Tensor4<T> record_tensor(const TensorRecord& r) {
  if (r.dims.size() > 4) throw ShapeError("record '" + r.name + "' has " + std::to_string(r.dims.size()) + " dims");
  std::size_t d[4] = {1, 1, 1, 1};
  for (std::size_t i = 0; i < r.dims.size(); ++i) d[4 - r.dims.size() + i] = r.dims[i];
  return Tensor4<T>({d[0], d[1], d[2], d[3]}, record_values<T>(r));
}

class Checkpoint {
public:
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
  const TensorRecord& at(const std::string& name) const {
    if (auto* r = find(name)) return *r;
    throw NameError("checkpoint has no record '" + name + "'");
  }
  void put(TensorRecord r) {
    for (auto& existing : records)
      if (existing.name == r.name) {
        existing = std::move(r);
        return;
      }
    records.push_back(std::move(r));
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::vector<std::uint8_t> save(const Checkpoint& ck) {
  std::set<std::string> names;
  for (const auto& r : ck.records) {
    if (!names.insert(r.name).second) throw DuplicateNameError("duplicate record name '" + r.name + "'");
    if (r.dims.empty() || r.dims.size() > 255) throw ShapeError("record '" + r.name + "': ndim must be in [1, 255]");
    if (r.payload.size() != r.element_count() * dtype_width(r.dtype))
      throw ByteMismatchError("record '" + r.name + "': payload size does not match dims");
  }
  std::vector<std::uint8_t> out = {'C', 'N', 'N', 'F'};
  detail::put_le(out, kFormatVersion);
  detail::put_le(out, static_cast<std::uint32_t>(ck.records.size()));
  for (const auto& r : ck.records) {
    detail::put_le(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.push_back(static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) detail::put_le(out, d);
    out.insert(out.end(), r.payload.begin(), r.payload.end());
  }
  return out;
}

// Parses a whole buffer; any defect throws and no partial checkpoint escapes.
inline Checkpoint load(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n)
      throw TruncationError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos));
  };
  auto u32 = [&](const char* what) {
    need(4, what);
    auto v = detail::get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
    return v;
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), "CNNF", 4) != 0) throw BadMagicError("not a CNNF checkpoint (bad magic)");
  pos = 4;
  const auto version = u32("version");
  if (version != kFormatVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                       std::to_string(kFormatVersion) + ")");
  const auto count = u32("record count");
  Checkpoint ck;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const auto len = u32("name length");
    need(len, "name");
    r.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    if (!names.insert(r.name).second) throw DuplicateNameError("duplicate record name '" + r.name + "'");
    need(2, "dtype/ndim");
    const auto dt = bytes[pos++];
    if (dt != 1 && dt != 2) throw ParseError("record '" + r.name + "': unknown dtype code " + std::to_string(dt));
    r.dtype = static_cast<DType>(dt);
    const auto ndim = bytes[pos++];
    if (ndim == 0) throw ParseError("record '" + r.name + "': zero dims");
    std::size_t elems = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto v = u32("dims");
      if (v == 0) throw ByteMismatchError("record '" + r.name + "': zero-length dimension");
      if (elems > (SIZE_MAX / 8) / v) throw ByteMismatchError("record '" + r.name + "': dims overflow");
      elems *= v;
      r.dims.push_back(v);
    }
    const std::size_t nbytes = elems * dtype_width(r.dtype);
    need(nbytes, "payload");
    r.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + nbytes));
    pos += nbytes;
    ck.records.push_back(std::move(r));
  }
  if (pos != bytes.size())
    throw ByteMismatchError(std::to_string(bytes.size() - pos) + " trailing bytes after the last record");
  return ck;
}

// Written to a sibling temp file and renamed into place.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void save_file(const std::filesystem::path& path, const Checkpoint& ck) { write_file_atomic(path, save(ck)); }

inline Checkpoint load_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return load(bytes);
}

}  // namespace cnnf
