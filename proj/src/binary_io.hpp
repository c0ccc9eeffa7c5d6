#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "contrinet/errors.hpp"

namespace contrinet::detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& context) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated data while reading " + context);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const std::string& context, std::uint64_t limit = 1ULL << 30) {
  const auto size = read_pod<std::uint64_t>(in, context);
  if (size > limit) throw FormatError("implausible string length while reading " + context);
  std::string s(size, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(size))) throw FormatError("truncated data while reading " + context);
  return s;
}

}  // namespace contrinet::detail
