#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace optiview {

// splitmix64; used for seed mixing so derived streams are decorrelated.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

// Deterministic random stream. The mt19937_64 output sequence is fully
// specified by the standard and the distributions below are hand-rolled,
// so draws are bit-identical across platforms and compilers.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    // Child stream for id under this stream's seed; a pure function of
    // (seed, id), independent of how many draws happened on the parent.
    RngStream derive(std::uint64_t id) const { return RngStream(hash_combine(seed_, id)); }
    RngStream derive(std::uint64_t a, std::uint64_t b) const {
        return RngStream(hash_combine(hash_combine(seed_, a), b));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n); n > 0. Modulo bias is negligible for the
    // index ranges used here.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller without caching so the draw count per call is fixed.
    double normal(double mu = 0.0, double sigma = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mu + sigma * z;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// Stream for a (global_seed, scene_id, view_id)-style path.
inline RngStream derive_stream(std::uint64_t global_seed, std::uint64_t a) {
    return RngStream(hash_combine(global_seed, a));
}
inline RngStream derive_stream(std::uint64_t global_seed, std::uint64_t a, std::uint64_t b) {
    return RngStream(hash_combine(hash_combine(global_seed, a), b));
}

}  // namespace optiview
