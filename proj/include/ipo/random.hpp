#pragma once

#include <cstdint>
#include <random>

namespace ipo {

using Rng = std::mt19937_64;

// splitmix64 finalizer. All sub-seeds in the toolkit are derived through
// this function so that a run is a pure function of its top-level seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix64(mix64(parent) ^ (stream * 0xd6e8feb86659fd93ULL + 1));
}

}  // namespace ipo
