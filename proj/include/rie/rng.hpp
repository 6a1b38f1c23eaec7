#pragma once

#include <cmath>
#include <cstdint>

#include "rie/types.hpp"

namespace rie {

namespace detail {

inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Counter-based generator: the k-th output is a pure function of
/// (key, k), so streams can be split and replayed independently of the
/// platform's standard library.
class Rng {
  public:
    explicit Rng(uint64_t key) : key_(key) {}

    /// Distinct substream for a tagged consumer (X, Y, W, ... draws).
    Rng stream(uint64_t tag) const { return Rng(detail::mix64(key_ ^ detail::mix64(tag + 0x632BE59BD9B4E019ull))); }

    uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

    /// Uniform on [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (pairwise cached).
    double next_gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        cached_ = r * std::sin(2.0 * kPi * u2);
        have_cached_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// Substream tags used by the samplers.
enum class StreamTag : uint64_t { X = 1, Y = 2, W = 3, Aux = 4 };

inline Rng stream_for(uint64_t seed, StreamTag tag) {
    return Rng(seed).stream(static_cast<uint64_t>(tag));
}

} // namespace rie
