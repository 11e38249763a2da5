#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace cardiolens {

// Mixing function used to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded RNG with a documented, platform-stable stream.
//
// Engine: std::mt19937_64, whose output sequence is pinned by the C++
// standard. The <random> distribution adaptors are NOT portable across
// standard libraries, so every draw is derived from the raw 64-bit stream:
//
//   next()        raw engine output
//   uniform()     (next() >> 11) * 2^-53              -> [0, 1)
//   uniform_pos() ((next() >> 11) + 1) * 2^-53        -> (0, 1]
//   below(n)      bitmask rejection on the low bits   -> {0, .., n-1}
//   normal()      Box-Muller on (uniform_pos, uniform), second value cached
//   shuffle(v)    Fisher-Yates from the back using below()
//   substream(i)  Rng(splitmix64(splitmix64(seed) ^ (i + 0x9e3779b97f4a7c15)))
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next() { return engine_(); }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform_pos() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll((n - 1) | 1);
        std::uint64_t v;
        do {
            v = next() & mask;
        } while (v >= n);
        return v;
    }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<double> normal_vector(std::size_t n, double sigma = 1.0) {
        std::vector<double> out(n);
        for (auto& x : out) x = sigma * normal();
        return out;
    }

    // Independent deterministic substream; results do not depend on how many
    // draws were taken from the parent.
    Rng substream(std::uint64_t index) const {
        return Rng(splitmix64(splitmix64(seed_) ^ (index + 0x9e3779b97f4a7c15ULL)));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace cardiolens
