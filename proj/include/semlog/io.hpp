#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "semlog/errors.hpp"

namespace semlog::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume little-endian");

inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

// Append-only little-endian encoder.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }

  void put_doubles(std::span<const double> xs) {
    buf_.append(reinterpret_cast<const char*>(xs.data()), xs.size_bytes());
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    buf_.append(s);
  }

  const std::string& bytes() const { return buf_; }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

// Bounds-checked decoder; every overrun is a DataError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void get_doubles(std::span<double> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw DataError("truncated or corrupted file");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

// Framing shared by the binary formats: magic, version, payload, checksum.
inline std::string seal(std::string_view magic, std::uint32_t version, std::string_view payload) {
  ByteWriter w;
  w.bytes().append(magic);
  w.put<std::uint32_t>(version);
  w.put<std::uint64_t>(payload.size());
  w.bytes().append(payload);
  w.put<std::uint64_t>(fnv1a64(payload));
  return std::move(w.bytes());
}

inline std::string_view unseal(std::string_view file, std::string_view magic,
                               std::uint32_t version) {
  ByteReader r(file);
  if (r.remaining() < magic.size() || r.take(magic.size()) != magic) {
    throw DataError("bad magic: not a " + std::string(magic) + " file");
  }
  const auto got = r.get<std::uint32_t>();
  if (got != version) {
    throw DataError("unsupported format version " + std::to_string(got) + " (expected " +
                    std::to_string(version) + ")");
  }
  const auto len = r.get<std::uint64_t>();
  const auto payload = r.take(len);
  const auto sum = r.get<std::uint64_t>();
  if (r.remaining() != 0) throw DataError("trailing bytes after checksum");
  if (sum != fnv1a64(payload)) throw DataError("checksum mismatch");
  return payload;
}

}  // namespace semlog::io
