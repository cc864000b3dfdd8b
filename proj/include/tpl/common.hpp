// Copyright (c) 2026 The TPL Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared error types, deterministic RNG, and small string helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tpl {

// Base error. Subclasses map to CLI exit codes: UsageError -> 1,
// DataError/ShapeError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

namespace detail {
inline void strf_cat(std::ostringstream&) {}

template <typename T, typename... Rest>
void strf_cat(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    strf_cat(os, rest...);
}
}  // namespace detail

// Concatenate streamable arguments into a string.
template <typename... Args>
std::string strf(const Args&... args) {
    std::ostringstream os;
    detail::strf_cat(os, args...);
    return os.str();
}

// Shortest round-trippable decimal form, for CSV and JSON exports.
inline std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. Distributions are implemented here rather than with
// <random> so streams are identical across standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so nearby seeds decorrelate.
        next();
        next();
    }

    std::uint64_t next() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) {
        // 128-bit multiply trick; bias is negligible for n << 2^64.
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller, one cached value.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        cached_ = r * std::sin(two_pi * u2);
        has_cached_ = true;
        return r * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream keyed by (this seed, a, b).
    Rng fork(std::uint64_t a, std::uint64_t b = 0) const {
        std::uint64_t s = state_;
        s ^= 0x517cc1b727220a95ULL + a;
        splitmix64(s);
        s ^= 0x2545f4914f6cdd1dULL + b;
        splitmix64(s);
        return Rng(s);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace tpl
