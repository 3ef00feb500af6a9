#pragma once

#include <cstdint>
#include <random>

namespace ccm {

/// Seedable random stream. Each simulation entity owns its own stream so
/// that intervening on one node never shifts the draws of another.
class Rng {
public:
    Rng() : engine_(0x9e3779b97f4a7c15ULL) {}
    explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

    void reseed(std::uint64_t seed) { engine_.seed(mix(seed)); }

    /// Derive an independent substream (e.g. per node, per seed).
    static Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
        return Rng(mix(seed) ^ (0xbf58476d1ce4e5b9ULL * (stream_id + 1)));
    }

    double normal(double mean, double sd) {
        std::normal_distribution<double> d(mean, sd);
        return d(engine_);
    }
    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }
    std::uint64_t uniform_int(std::uint64_t n) {  // in [0, n)
        std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
        return d(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer; spreads small seeds over the state space
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

/// FNV-1a 64-bit digest, used for fixture and config provenance.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

}  // namespace ccm
