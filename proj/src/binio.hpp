#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

#include "convctx/common.hpp"

// Little-endian host assumed; files are not portable to big-endian machines.
namespace convctx::binio {

template <typename T>
void put(std::ostream& out, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, std::string_view what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated " + std::string(what));
  return v;
}

inline void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::string_view what) {
  const auto n = get<std::uint32_t>(in, what);
  if (n > (1u << 24)) throw DataError("implausible string length in " + std::string(what));
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("truncated " + std::string(what));
  return s;
}

inline void put_magic(std::ostream& out, std::string_view magic, std::uint32_t version) {
  char buf[8] = {};
  std::memcpy(buf, magic.data(), std::min<std::size_t>(magic.size(), 8));
  out.write(buf, 8);
  put(out, version);
}

inline void expect_magic(std::istream& in, std::string_view magic, std::uint32_t version, std::string_view what) {
  char buf[8] = {};
  char want[8] = {};
  std::memcpy(want, magic.data(), std::min<std::size_t>(magic.size(), 8));
  if (!in.read(buf, 8) || std::memcmp(buf, want, 8) != 0) throw DataError(std::string(what) + ": bad magic");
  const auto v = get<std::uint32_t>(in, what);
  if (v != version) throw DataError(std::string(what) + ": unsupported version " + std::to_string(v));
}

}  // namespace convctx::binio
