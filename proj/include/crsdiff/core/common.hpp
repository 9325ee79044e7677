#pragma once

// Shared error taxonomy and tiny helpers used across the library.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace crsdiff {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad flag/config values.  CLI maps this to exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed runtime inputs (wrong shapes, unknown tokens, ...).
struct InputError : Error {
    using Error::Error;
};

// Corrupted or mismatched persisted artifacts.  CLI exit code 3.
struct IntegrityError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.  CLI exit code 4.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Not enough samples for a statistic to be defined.
struct StatsError : Error {
    using Error::Error;
};

template <typename E = Error>
inline void require(bool ok, const std::string& msg) {
    if (!ok)
        throw E(msg);
}

inline int64_t idiv_ceil(int64_t a, int64_t b) {
    return (a + b - 1) / b;
}

template <typename T>
inline T clamp01(T v) {
    return v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
}

}  // namespace crsdiff
