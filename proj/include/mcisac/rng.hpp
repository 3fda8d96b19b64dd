#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mcisac/linalg.hpp"

namespace mcisac {

/// Deterministic random stream. Gaussian draws go through an explicit
/// Box-Muller transform instead of std::normal_distribution, whose output
/// sequence is implementation-defined; this keeps seeded runs identical
/// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// splitmix64 scramble of a (seed, index) pair.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Independent substream for (seed, index) pairs, e.g. one per
    /// Monte-Carlo trial so the trial order does not matter.
    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix(seed, index));
    }

    double uniform() {
        // 53-bit mantissa uniform in (0,1]
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex Gaussian, unit variance per entry.
    cxd complex_normal() {
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        double re = normal();
        double im = normal();
        return {re * inv_sqrt2, im * inv_sqrt2};
    }

    VecC complex_normal_vector(Eigen::Index n) {
        VecC v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = complex_normal();
        return v;
    }

    MatC complex_normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        MatC m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = complex_normal();
        return m;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace mcisac
