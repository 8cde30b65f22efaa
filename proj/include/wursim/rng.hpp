#pragma once

#include <cstdint>
#include <random>

namespace wursim {

/// splitmix64 step; used to derive well-separated seeds from small integers.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mixes an arbitrary list of 64-bit words into one seed.
/// mix_seed(base, cell, rep) gives independent streams per sweep cell
/// and replication without coordination between workers.
template <typename... Words>
std::uint64_t mix_seed(std::uint64_t base, Words... words) {
    std::uint64_t state = base;
    std::uint64_t out = splitmix64(state);
    ((state ^= static_cast<std::uint64_t>(words) + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2),
      out = splitmix64(state)),
     ...);
    return out;
}

/// Deterministic random source for one simulation instance.
/// Not shared between threads; every consumer owns its own.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    /// Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    /// Exponential inter-arrival gap with the given rate (rate > 0).
    double exponential(double rate) {
        return std::exponential_distribution<double>(rate)(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace wursim
