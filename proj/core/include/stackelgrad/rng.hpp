#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace stackelgrad {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG stream. Distributions are implemented by hand so that a
// seed yields the same sequence on every platform; std engines leave the
// double-valued distributions implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent stream for a sub-task (replicate, grid cell, layer).
    Rng child(std::uint64_t index) const {
        return Rng(splitmix64(seed_ ^ splitmix64(index + 1)));
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal(double mu = 0.0, double sigma = 1.0) {
        // Box-Muller, cosine branch only; one fresh pair of uniforms per call.
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mu + sigma * z;
    }

    std::uint64_t integer(std::uint64_t n) {  // [0, n)
        return gen_() % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[integer(i)]);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace stackelgrad
