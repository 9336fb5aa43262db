#ifndef CARDIORECON_RNG_HPP
#define CARDIORECON_RNG_HPP

#include <cmath>
#include <cstdint>

namespace cardiorecon {

/// Counter-based deterministic RNG (splitmix64 core). Streams are derived by
/// forking with a tag, so any (seed, subject, iteration, slot) combination maps
/// to an independent, reproducible stream without shared mutable state. Output
/// does not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kKeyInit)) {}

    /// Independent child stream. fork(a).fork(b) != fork(b).fork(a).
    Rng fork(std::uint64_t tag) const { return Rng(mix(key_ ^ mix(tag + kTagSalt)), 0); }

    std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGamma); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    Rng(std::uint64_t key, int) : key_(key) {}

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static constexpr std::uint64_t kKeyInit = 0x8f1bbcdcbfa53e0bULL;
    static constexpr std::uint64_t kTagSalt = 0xd6e8feb86659fd93ULL;
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    static constexpr double kPi = 3.14159265358979323846;

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

/// Stream tags used across the project so independent consumers never collide.
namespace rng_tag {
constexpr std::uint64_t kSubject = 1;
constexpr std::uint64_t kBatch = 2;
constexpr std::uint64_t kAugment = 3;
constexpr std::uint64_t kEps = 4;
constexpr std::uint64_t kConfidence = 5;
constexpr std::uint64_t kNoiseField = 6;
}  // namespace rng_tag

}  // namespace cardiorecon

#endif
