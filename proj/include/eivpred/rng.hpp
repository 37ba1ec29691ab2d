#pragma once

#include <cstdint>

namespace eiv {

/// Mixes a 64-bit value (SplitMix64 finalizer).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent seed from a parent seed and a counter.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t counter) {
  return mix64(parent ^ mix64(counter + 0x9e3779b97f4a7c15ULL));
}

/// Counter-addressed random stream. A stream is fully determined by
/// (seed, replication, index), so draws never depend on scheduling order.
/// Normals come from Box-Muller so that results are identical across
/// standard library implementations.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t replication, std::uint64_t index)
      : state_(derive_seed(derive_seed(seed, replication), index)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal();

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace eiv
