#pragma once

#include <cstdint>

namespace lfd {

// Counter-free splitmix64 stream. Used instead of <random> engines so that
// sequences are identical across standard library implementations.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t state_;
};

// Independent stream for a (seed, view, superpixel) triple. The mixing is a
// fixed-point hash, so streams do not depend on evaluation order.
inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t view, std::uint64_t sp) {
    std::uint64_t h = seed;
    h ^= (view + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
    h *= 0xFF51AFD7ED558CCDull;
    h ^= (sp + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
    h *= 0xC4CEB9FE1A85EC53ull;
    h ^= h >> 33;
    return RandomStream(h);
}

}  // namespace lfd
