#pragma once

#include <cstdint>
#include <random>

namespace mortpca {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent random stream for (seed, trajectory, component). Streams are
/// derived from the indices alone, so a trajectory's draws do not depend on
/// how trajectories are scheduled across threads.
inline Rng make_stream(std::uint64_t seed, std::uint64_t trajectory,
                       std::uint64_t component = 0) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ detail::splitmix64(trajectory + 0x632be59bd9b4e019ULL));
  h = detail::splitmix64(h ^ detail::splitmix64(component + 0x8cb92ba72f3d8dd7ULL));
  return Rng(h);
}

}  // namespace mortpca
