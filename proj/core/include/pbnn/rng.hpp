#ifndef PBNN_RNG_HPP
#define PBNN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace pbnn {

// SplitMix64 step, used to derive well-separated child seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Child seed for a parallel task. Results must not depend on which thread
// runs the task, so every work unit draws from its own derived stream.
inline uint64_t derive_seed(uint64_t master, uint64_t task) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (task + 1));
    splitmix64(s);
    return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b) {
    return derive_seed(derive_seed(master, a), b);
}

// mt19937_64 with pinned output conversions. The std distribution objects
// are implementation-defined, which would break bitwise reproducibility of
// stored traces, so uniform/normal/bernoulli are generated explicitly.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t raw() { return engine_(); }

    // uniform on [0,1), 53-bit resolution
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform on (0,1], safe as a log argument
    double uniform01_open() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller; caches the second variate
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // modulo bias is irrelevant for the index ranges used here (n << 2^64)
        return engine_() % n;
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace pbnn

#endif
