#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace minnet {

// Error categories thrown across the library.
struct InvalidInput : std::runtime_error { using std::runtime_error::runtime_error; };
struct InvalidState : std::runtime_error { using std::runtime_error::runtime_error; };
struct FormatError  : std::runtime_error { using std::runtime_error::runtime_error; };
struct IoError      : std::runtime_error { using std::runtime_error::runtime_error; };
struct ConfigError  : std::runtime_error { using std::runtime_error::runtime_error; };

enum class Mode { Train, Eval };

// splitmix64 finalizer.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent sub-seed (init, shuffle, dropout, ...) from one run seed.
inline std::uint64_t sub_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream));
}

}  // namespace minnet
