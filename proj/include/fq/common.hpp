#pragma once
// Shared scalar types and small helpers used across the stack.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fq {

// All clocks and durations in the system are integer milliseconds.
using Ms = std::int64_t;

// Thrown for malformed inputs (configs, manifests, frames). Carries a stable
// one-word code plus a human message; the code is what goes on the wire.
struct Error : std::runtime_error {
  std::string code;
  Error(std::string c, const std::string& msg)
      : std::runtime_error(c + ": " + msg), code(std::move(c)) {}
};

// SHA-256 of a byte string, rendered as 64 lowercase hex chars.
std::string sha256_hex(const std::string& bytes);

// splitmix64, used to derive independent RNG stream seeds from (seed, tags).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t seed_for(std::uint64_t seed, const std::string& tag, std::uint64_t idx);

// Fixed-point decimal rendering used by reports so identical runs produce
// byte-identical files (never locale- or precision-surprising iostreams).
std::string fmt_fixed(double v, int decimals);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace fq
