#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

namespace tmbh {

// Stateless seed mixer (splitmix64). Used to derive independent stream seeds
// from (base seed, item index, stage id) so that ensemble results do not
// depend on thread scheduling.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix_seed(base);
    s = mix_seed(s ^ (a + 0x9e3779b97f4a7c15ULL));
    s = mix_seed(s ^ (b + 0xd1b54a32d192ed03ULL));
    s = mix_seed(s ^ (c + 0x8cb92ba72f3d8dd7ULL));
    return s;
}

// mt19937_64 with hand-rolled variate transforms. The std:: distributions are
// implementation-defined, which would break byte-identical reruns across
// toolchains; the raw engine output is specified by the standard.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; caches the second variate.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Uniform point on the simplex {w >= 0, sum w = 1} of dimension 3.
    std::array<double, 3> simplex3() {
        double a = uniform(), b = uniform();
        if (a > b) std::swap(a, b);
        return {a, b - a, 1.0 - b};
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tmbh
