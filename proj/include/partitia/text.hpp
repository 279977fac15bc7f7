#pragma once

// Deterministic text formatting for data files: shortest round-trip floats,
// so identical (config, seed) runs produce byte-identical output.

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

namespace partitia {

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_u64(std::uint64_t v) {
  char buf[24];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace partitia
