#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mazefl {

// splitmix64 finalizer; decorrelates consecutive / related integers.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Stable seed for a named sub-stream of `base`. Used wherever one
// user-facing seed has to fan out into independent streams (per-cell
// collection, per-round shuffles, ...) without the streams aliasing.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    return splitmix64(base ^ splitmix64(salt));
}

// Deterministic random source. mt19937_64 output is pinned by the C++
// standard, but the standard *distributions* are not, so the mappings to
// uniform/gaussian/integer values are implemented here and never change.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1), 53 usable bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, bound); bound must be nonzero.
    // Multiply-shift map; bias is below 2^-32 for realistic bounds.
    std::uint64_t uniform_int(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    // Box-Muller transform; consumes exactly two uniforms per call.
    double gaussian(double mean, double sigma) {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(2.0 * kPi * u2);
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;
    std::mt19937_64 engine_;
};

// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace mazefl
