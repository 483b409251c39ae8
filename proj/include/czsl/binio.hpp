#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "czsl/error.hpp"

// Little-endian binary record helpers shared by the feature-table and
// checkpoint formats. Reads throw ErrorKind::integrity naming `what` when the
// stream ends early.

namespace czsl::binio {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_arithmetic_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (sizeof(T) > 1) {
    std::uint64_t probe = 1;
    unsigned char lsb;
    std::memcpy(&lsb, &probe, 1);
    if (lsb != 1) {  // big-endian host
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
  }
  write_bytes(os, buf, sizeof(T));
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline void read_bytes(std::istream& is, void* p, std::size_t n,
                       const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  check(static_cast<std::size_t>(is.gcount()) == n, ErrorKind::integrity,
        "truncated file while reading ", what);
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  read_bytes(is, buf, sizeof(T), what);
  if constexpr (sizeof(T) > 1) {
    std::uint64_t probe = 1;
    unsigned char lsb;
    std::memcpy(&lsb, &probe, 1);
    if (lsb != 1) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
  }
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline std::string read_string(std::istream& is, const char* what) {
  const auto len = read_le<std::uint32_t>(is, what);
  check(len <= (1u << 28), ErrorKind::integrity, "implausible string length in ",
        what);
  std::string s(len, '\0');
  if (len > 0) read_bytes(is, s.data(), len, what);
  return s;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
  for (double x : v) write_le<double>(os, x);
}

inline std::vector<double> read_doubles(std::istream& is, std::size_t n,
                                        const char* what) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = read_le<double>(is, what);
  return v;
}

}  // namespace czsl::binio
