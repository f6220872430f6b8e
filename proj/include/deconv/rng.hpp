#pragma once

#include <cstdint>

namespace deconv {

// ============================= random numbers =============================
//
// One generator is used everywhere in this library: SplitMix64, a 64-bit
// counter/mix generator (Steele, Lea & Flood 2014; the mixer is Stafford's
// "Mix13" variant of the MurmurHash3 finalizer).  The state advances by a
// fixed odd constant (the golden-ratio increment) and each output is a
// bijective scramble of the counter, so streams are reproducible across
// platforms and independent of call order within a stream.

/// Stafford Mix13 finalizer: bijective 64-bit scramble.
inline std::uint64_t mix64_scramble(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

/// Deterministic seed derivation.  mix64(a, b) folds `b` into stream `a`
/// through two scramble rounds; used to derive per-replicate seeds as
/// mix64(mix64(master_seed, n), replicate_index) so that every (n, r) pair
/// gets a distinct, order-independent stream.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64_scramble(mix64_scramble(a + 0x9e3779b97f4a7c15ull) ^ b);
}

/// SplitMix64 engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        return mix64_scramble(z);
    }

    /// Uniform double on the open interval (0, 1): the top 53 bits of the
    /// output are offset by half an ulp, so 0 and 1 are never returned.
    /// Open endpoints keep inverse-CDF transforms finite.
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

} // namespace deconv
