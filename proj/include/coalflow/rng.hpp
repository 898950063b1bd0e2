#pragma once

#include <cmath>
#include <cstdint>

// Deterministic randomness for the whole engine.
//
// Every experiment is a pure function of (spec, seed). Two primitives make
// that work:
//   - RngStream: a sequential generator addressed by (seed, stream), so
//     replica r of an estimate always draws from (seed, r) no matter how
//     replicas are scheduled across threads.
//   - NoiseField: a counter-based field addressed by (seed, tag) that yields
//     one fixed draw per (site, tick) pair. Walks that share a site-time
//     consume the same draw, which is what makes coalescence automatic.

namespace coalflow {

constexpr inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

namespace detail {
inline std::uint64_t splitmix_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
}  // namespace detail

// xoshiro256++ seeded from (seed, stream) through a splitmix chain.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t init = seed ^ mix64(stream ^ 0xa0761d6478bd642full);
        for (auto& word : state_) word = detail::splitmix_next(init);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    std::uint64_t next_u64() {
        std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; draws are a fixed function of the
    // stream so replays are bit-identical on any platform.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, n) (Lemire rejection).
    std::uint64_t next_below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

  private:
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Counter-based noise: value at (a, b) is a pure hash of (seed, tag, a, b).
// Lets a simulation read "the" step drawn at lattice point (a, b) without
// materialising the field.
class NoiseField {
  public:
    NoiseField(std::uint64_t seed, std::uint64_t tag)
        : key_(mix64(seed ^ mix64(tag ^ 0x8f1bbcdcbfa53e0bull))) {}

    std::uint64_t raw(std::int64_t a, std::int64_t b) const {
        std::uint64_t h = key_;
        h = mix64(h ^ mix64(static_cast<std::uint64_t>(a) + 0x2545f4914f6cdd1dull));
        h = mix64(h ^ mix64(static_cast<std::uint64_t>(b) + 0xc2b2ae3d27d4eb4full));
        return h;
    }

    double uniform(std::int64_t a, std::int64_t b) const {
        return static_cast<double>(raw(a, b) >> 11) * 0x1.0p-53;
    }

  private:
    std::uint64_t key_;
};

}  // namespace coalflow
