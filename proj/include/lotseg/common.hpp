#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lotseg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad dimensions, fractions, hyperparameters).
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed or inconsistent input data (non-finite values, missing labels).
struct DataError : Error {
    using Error::Error;
};

/// Broken on-disk container (bad manifest, truncated tensor, unknown version).
struct FormatError : Error {
    using Error::Error;
};

/// API contract violation (shape mismatch, M < 2, unknown class id).
struct ContractError : Error {
    using Error::Error;
};

/// Optimization diverged (non-finite loss), names the failing epoch.
struct TrainingError : Error {
    using Error::Error;
};

/// SGHMC chain produced a non-finite loss, names the failing step.
struct SamplerError : Error {
    using Error::Error;
};

/// Statistics routine called on degenerate input (e.g. all-zero differences).
struct StatsError : Error {
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic RNG. All randomness in the library goes through this class so
/// results are reproducible for a given seed independent of call order
/// elsewhere. fork() derives an independent stream from the base seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(mix_seed(seed, 0)) {}

    Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

    std::uint64_t raw() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + std::int64_t(eng_() % span);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = std::size_t(integer(0, std::int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace lotseg
