#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hiernet {

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named component.
///
/// seed' = splitmix64(global ^ fnv1a64(name)). Components stay reproducible
/// and do not share streams even when they draw a different number of values.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component);

inline Rng make_rng(std::uint64_t global_seed, std::string_view component) {
  return Rng{derive_seed(global_seed, component)};
}

}  // namespace hiernet
