#ifndef CCMATCH_RNG_HPP
#define CCMATCH_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace ccmatch {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stable sub-seed derivation so independent streams (workers, iterations,
/// methods) never share state.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    return splitmix64(splitmix64(base) ^ splitmix64(salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

/// Deterministic random source. All distributions are implemented by hand on
/// top of mt19937_64 so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform index in [0, n). Requires n > 0.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(eng_()) * static_cast<unsigned __int128>(n)) >> 64);
    }

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_index(static_cast<std::size_t>(hi - lo) + 1));
    }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Exponential variate with the given mean.
    double exponential(double mean) { return -mean * std::log1p(-next_double()); }

    bool bernoulli(double p) { return next_double() < p; }

private:
    std::mt19937_64 eng_;
};

}  // namespace ccmatch

#endif
