#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace discus {

using cd = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Thrown for invalid configuration / invalid inputs (CLI exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for file/container problems (CLI exit code 1).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One row of an optimizer loss trace.
struct LossRecord {
    int iteration = 0;
    double data_term = 0.0;
    double penalty_term = 0.0;
};

// Thrown when an iterative fit produces a non-finite loss (CLI exit code 2).
// Carries the trace accumulated up to the failing iteration.
struct DivergenceError : std::runtime_error {
    std::vector<LossRecord> trace;
    DivergenceError(const std::string& what, std::vector<LossRecord> tr)
        : std::runtime_error(what), trace(std::move(tr)) {}
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(std::span<const cd> v) {
    for (const cd& x : v)
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    return true;
}

// Deterministic random stream used everywhere randomness is needed.
//
// The stream is fully pinned so experiments replay exactly:
//   - engine: mt19937_64 seeded directly with the given seed
//   - uniform(): (next() >> 11) * 2^-53, a double in [0, 1)
//   - normal(): Box-Muller from two uniform() draws, no spare caching,
//     so every normal() consumes exactly two engine outputs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double sigma) {
        return mean + sigma * normal();
    }

    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

inline double sq(double x) { return x * x; }

inline double norm_sq(std::span<const cd> v) {
    double s = 0.0;
    for (const cd& x : v) s += std::norm(x);
    return s;
}

inline double norm_sq(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace discus
