#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bioenv {

/// Seeded random source with hand-rolled transforms.
///
/// std::mt19937_64 is bit-exact everywhere, but the standard distributions
/// are not; every draw below is derived from raw engine output so a seed
/// reproduces the same stream on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_hash_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates, high index down.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent child stream (splitmix64 over seed and stream id).
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix64(splitmix64(seed_hash_ ^ 0x9e3779b97f4a7c15ULL) + stream));
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_hash_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace bioenv
