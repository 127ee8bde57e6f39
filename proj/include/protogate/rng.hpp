#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace protogate::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a named sub-seed from a master seed. All randomness in the
/// project flows from one top-level seed split by role ("init", "shuffle",
/// "synth", "split"), so pipelines stay reproducible end to end. The mix is
/// FNV-1a over the tag folded into splitmix64, fully specified arithmetic,
/// identical on every platform.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t counter = 0) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t state = master ^ h;
    std::uint64_t mixed = splitmix64(state);
    state = mixed ^ (counter * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    return splitmix64(state);
}

/// Counter-free splitmix64 engine with portable floating-point helpers.
/// std::shuffle / std::normal_distribution are implementation-defined, so we
/// avoid them wherever a value must reproduce bit-for-bit.
class Engine {
public:
    explicit Engine(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1), 53 bits of mantissa.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; the spare value is cached so each
    /// draw consumes a deterministic amount of the stream.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Unbiased integer in [0, n) by rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fisher-Yates permutation of {0, .., n-1}.
inline std::vector<std::size_t> permutation(Engine& eng, std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(eng.below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace protogate::rng
