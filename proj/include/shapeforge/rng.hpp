#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace shapeforge {

namespace detail {

/// splitmix64, used only to spread seeds for derived streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Seeded random stream. The raw generator is std::mt19937_64 (its output
/// sequence is fixed by the standard); uniform and normal draws are computed
/// with explicit formulas so results do not depend on any library's
/// distribution internals. Every draw sequence is reproducible from the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Independent stream derived from this stream's seed and a stream id.
    /// Derivation does not consume generator state.
    Rng derive(std::uint64_t stream_id) const {
        return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(stream_id)));
    }

    std::uint64_t raw() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), exact via rejection.
    std::uint64_t index(std::uint64_t n) {
        std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n + 1) % n;
        std::uint64_t v;
        do { v = gen_(); } while (v > limit);
        return v % n;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per draw.
    double normal() {
        double u1 = double((gen_() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = double(gen_() >> 11) * 0x1.0p-53;       // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Fisher-Yates shuffle with this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace shapeforge
