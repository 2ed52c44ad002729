#pragma once

#include <cstdint>
#include <array>
#include <cmath>

#include "dynpet/vec.hpp"

namespace dynpet {

// Philox4x64-10 counter-based generator (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3"), bit-compatible with numpy.random.Philox.
//
// Stream discipline used throughout the simulator: the key is
// (seed, stream id) and the 256-bit counter advances within the stream.
// Each sampled event gets its own stream, so event generation is
// order-independent and reproducible under parallel generation.
class Philox {
public:
    Philox(std::uint64_t seed, std::uint64_t stream)
        : key_{seed, stream}, ctr_{0, 0, 0, 0}, idx_(4) {}

    std::uint64_t next_u64() {
        if (idx_ == 4) {
            // Pre-increment convention, matching numpy: the first block of a
            // stream with counter c is the raw block at c + 1.
            advance_counter();
            block_ = round10(ctr_, key_);
            idx_ = 0;
        }
        return block_[idx_++];
    }

    // Uniform double in [0,1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // One block of raw output for a given counter/key, no state. Used by tests
    // against known-answer vectors.
    static std::array<std::uint64_t, 4> block(const std::array<std::uint64_t, 4>& counter,
                                              const std::array<std::uint64_t, 2>& key) {
        return round10(counter, key);
    }

private:
    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    static std::array<std::uint64_t, 4> round10(std::array<std::uint64_t, 4> x,
                                                std::array<std::uint64_t, 2> k) {
        constexpr std::uint64_t M0 = 0xD2E7470EE14C6C93ULL;
        constexpr std::uint64_t M1 = 0xCA5A826395121157ULL;
        constexpr std::uint64_t W0 = 0x9E3779B97F4A7C15ULL;
        constexpr std::uint64_t W1 = 0xBB67AE8584CAA73BULL;
        for (int r = 0; r < 10; ++r) {
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(M0, x[0], hi0, lo0);
            mulhilo(M1, x[2], hi1, lo1);
            x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
            k[0] += W0;
            k[1] += W1;
        }
        return x;
    }

    void advance_counter() {
        for (int i = 0; i < 4; ++i)
            if (++ctr_[i] != 0) break;
    }

    std::array<std::uint64_t, 2> key_;
    std::array<std::uint64_t, 4> ctr_;
    std::array<std::uint64_t, 4> block_{};
    int idx_;
};

// Uniform point on the unit sphere S^{dim-1}.
inline Vec sample_unit_direction(Philox& rng, int dim) {
    if (dim == 2) {
        double phi = 2.0 * M_PI * rng.next_double();
        return Vec{std::cos(phi), std::sin(phi), 0.0};
    }
    double u = 2.0 * rng.next_double() - 1.0;  // cos(colatitude), area-uniform
    double phi = 2.0 * M_PI * rng.next_double();
    double r = std::sqrt(std::max(0.0, 1.0 - u * u));
    return Vec{r * std::cos(phi), r * std::sin(phi), u};
}

// Standard normal via Box-Muller (one value per call, second discarded to keep
// the stream layout simple).
inline double sample_normal(Philox& rng) {
    double u1 = rng.next_double();
    double u2 = rng.next_double();
    while (u1 <= 0.0) u1 = rng.next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Poisson sample with arbitrary nonnegative mean. Means above 30 are split
// into independent chunks so the multiplication method stays in range.
inline std::uint64_t sample_poisson(Philox& rng, double mean) {
    std::uint64_t total = 0;
    while (mean > 30.0) {
        double part = 30.0;
        double l = std::exp(-part);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            ++k;
            p *= rng.next_double();
        } while (p > l);
        total += k - 1;
        mean -= part;
    }
    if (mean > 0.0) {
        double l = std::exp(-mean);
        double p = 1.0;
        std::uint64_t k = 0;
        do {
            ++k;
            p *= rng.next_double();
        } while (p > l);
        total += k - 1;
    }
    return total;
}

}  // namespace dynpet
