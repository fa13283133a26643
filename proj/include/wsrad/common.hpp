#pragma once

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wsrad {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised for unreadable/unwritable paths.
struct IoError : Error {
  using Error::Error;
};

// Raised for malformed file contents (NIfTI headers, manifests, configs).
struct FormatError : Error {
  using Error::Error;
};

// Raised when an argument violates an operation's precondition.
struct InvalidArgument : Error {
  using Error::Error;
};

// Raised when a region selects no voxels.
struct EmptyRegionError : Error {
  using Error::Error;
};

enum class Grade { HGG, LGG };

inline std::string_view to_string(Grade g) { return g == Grade::HGG ? "HGG" : "LGG"; }

// HGG is the positive class.
inline int grade_to_label(Grade g) { return g == Grade::HGG ? +1 : -1; }

inline Grade parse_grade(std::string_view token) {
  if (token == "HGG") return Grade::HGG;
  if (token == "LGG") return Grade::LGG;
  throw FormatError("unknown grade token '" + std::string(token) + "'");
}

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a stable task key.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return mix64(seed ^ mix64(key));
}

/// FNV-1a over bytes; stable content digest for cache keys and task keys.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline void log_warning(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

}  // namespace wsrad
