#pragma once

// FEATPACK: a flat container of named dense arrays.
//
// Byte layout, little-endian throughout:
//    magic        8 bytes  "AQTCFT01"
//    entry_count  u32
//    per entry:
//      key_len    u16
//      key        key_len bytes, UTF-8
//      dtype      u8       1 = f32, 2 = i8
//      ndim       u8       1..4
//      dims       ndim x u32
//      payload    product(dims) values, row-major
//    crc32        u32 over every byte after the magic
//
// Entries are written in key order, so equal maps give equal files.

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aqtc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "FEATPACK I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace aqtc {

enum class DType : std::uint8_t { f32 = 1, i8 = 2 };

inline constexpr std::string_view kFeatPackMagic = "AQTCFT01";

struct DenseArray {
  std::vector<std::uint32_t> shape;
  std::variant<std::vector<float>, std::vector<std::int8_t>> data;

  static DenseArray f32(std::vector<std::uint32_t> shape, std::vector<float> values) {
    return DenseArray{std::move(shape), std::move(values)};
  }
  static DenseArray i8(std::vector<std::uint32_t> shape, std::vector<std::int8_t> values) {
    return DenseArray{std::move(shape), std::move(values)};
  }

  DType dtype() const noexcept {
    return std::holds_alternative<std::vector<float>>(data) ? DType::f32 : DType::i8;
  }
  std::size_t size() const noexcept {
    return std::visit([](const auto& v) { return v.size(); }, data);
  }
  std::size_t element_bytes() const noexcept { return dtype() == DType::f32 ? 4 : 1; }

  const std::vector<float>& as_f32() const { return std::get<std::vector<float>>(data); }
  const std::vector<std::int8_t>& as_i8() const { return std::get<std::vector<std::int8_t>>(data); }

  const std::uint8_t* bytes() const noexcept {
    return std::visit([](const auto& v) { return reinterpret_cast<const std::uint8_t*>(v.data()); },
                      data);
  }

  // Bit-exact: NaN payloads and signed zeros must match too.
  friend bool operator==(const DenseArray& a, const DenseArray& b) {
    if (a.shape != b.shape || a.dtype() != b.dtype() || a.size() != b.size()) return false;
    return a.size() == 0 || std::memcmp(a.bytes(), b.bytes(), a.size() * a.element_bytes()) == 0;
  }
};

using FeatPack = std::map<std::string, DenseArray>;

namespace detail {

inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range code points.
    static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - off));
    crc = ::crc32(crc, bytes.data() + off, n);
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("FEATPACK truncated");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void validate_entry(const std::string& key, const DenseArray& array) {
  if (key.empty()) throw ValidationError("FEATPACK key must be non-empty");
  if (key.size() > 0xFFFF) throw ValidationError("FEATPACK key longer than 65535 bytes");
  if (!detail::valid_utf8(key)) throw ValidationError("FEATPACK key is not valid UTF-8");
  if (array.shape.empty() || array.shape.size() > 4) {
    throw ValidationError("array '" + key + "' has ndim outside [1, 4]");
  }
  const auto count = std::accumulate(array.shape.begin(), array.shape.end(), std::uint64_t{1},
                                     std::multiplies<>());
  if (count != array.size()) {
    throw ValidationError("array '" + key + "' shape does not match element count");
  }
}

inline std::vector<std::uint8_t> encode_featpack(const FeatPack& entries) {
  if (entries.size() > 0xFFFFFFFFu) throw ValidationError("too many FEATPACK entries");
  detail::ByteWriter out;
  out.put_bytes(reinterpret_cast<const std::uint8_t*>(kFeatPackMagic.data()), kFeatPackMagic.size());
  out.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [key, array] : entries) {
    validate_entry(key, array);
    out.put(static_cast<std::uint16_t>(key.size()));
    out.put_bytes(reinterpret_cast<const std::uint8_t*>(key.data()), key.size());
    out.put(static_cast<std::uint8_t>(array.dtype()));
    out.put(static_cast<std::uint8_t>(array.shape.size()));
    for (auto d : array.shape) out.put(d);
    out.put_bytes(array.bytes(), array.size() * array.element_bytes());
  }
  auto& buf = out.buffer();
  const auto crc = detail::crc32_of(std::span(buf).subspan(kFeatPackMagic.size()));
  out.put(crc);
  return std::move(buf);
}

inline FeatPack decode_featpack(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFeatPackMagic.size() ||
      std::memcmp(bytes.data(), kFeatPackMagic.data(), kFeatPackMagic.size()) != 0) {
    throw FormatError("bad FEATPACK magic");
  }
  if (bytes.size() < kFeatPackMagic.size() + 8) throw FormatError("FEATPACK truncated");

  const auto body = bytes.subspan(kFeatPackMagic.size(), bytes.size() - kFeatPackMagic.size() - 4);
  detail::ByteReader in(body);
  FeatPack entries;
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto key_len = in.get<std::uint16_t>();
    const auto key_bytes = in.take(key_len);
    std::string key(key_bytes.begin(), key_bytes.end());
    const auto dtype = in.get<std::uint8_t>();
    const auto ndim = in.get<std::uint8_t>();
    if (dtype != 1 && dtype != 2) throw FormatError("unknown dtype in entry '" + key + "'");
    if (ndim < 1 || ndim > 4) throw FormatError("ndim outside [1, 4] in entry '" + key + "'");
    DenseArray array;
    array.shape.resize(ndim);
    for (auto& d : array.shape) d = in.get<std::uint32_t>();
    std::uint64_t count_elems = 0;
    if (std::find(array.shape.begin(), array.shape.end(), 0u) == array.shape.end()) {
      count_elems = 1;
      for (auto d : array.shape) {
        count_elems *= d;
        if (count_elems > in.remaining()) throw FormatError("FEATPACK truncated");
      }
    }
    const auto n = static_cast<std::size_t>(count_elems);
    if (dtype == 1) {
      std::vector<float> values(n);
      const auto raw = in.take(n * 4);
      if (n > 0) std::memcpy(values.data(), raw.data(), raw.size());
      array.data = std::move(values);
    } else {
      std::vector<std::int8_t> values(n);
      const auto raw = in.take(n);
      if (n > 0) std::memcpy(values.data(), raw.data(), raw.size());
      array.data = std::move(values);
    }
    if (key.empty() || !detail::valid_utf8(key)) throw FormatError("invalid FEATPACK key");
    if (!entries.emplace(std::move(key), std::move(array)).second) {
      throw FormatError("duplicate FEATPACK key");
    }
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after FEATPACK entries");

  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  const auto computed = detail::crc32_of(
      bytes.subspan(kFeatPackMagic.size(), bytes.size() - kFeatPackMagic.size() - 4));
  if (stored != computed) throw CorruptionError("FEATPACK CRC32 mismatch");
  return entries;
}

inline void write_featpack(const FeatPack& entries, const std::filesystem::path& path) {
  const auto bytes = encode_featpack(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline FeatPack read_featpack(const std::filesystem::path& path) {
  return decode_featpack(read_file_bytes(path));
}

}  // namespace aqtc
