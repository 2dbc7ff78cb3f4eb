#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace monrec {

// Error taxonomy. Every throw site attaches a message naming the offending
// key/kind/value so CLI diagnostics stay actionable.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DuplicateError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line = 0;
};

struct ShapeError : Error {
    using Error::Error;
};

struct NonFiniteError : Error {
    using Error::Error;
};

struct DivergenceError : Error {
    using Error::Error;
};

using Rng = std::mt19937_64;

/// 64-bit FNV-1a. Used for feature hashing, cache keys and content hashes;
/// fixed constants keep results identical across processes and platforms.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Mixes a node/entity id into a base seed so per-entity RNG streams are
/// independent of iteration order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL + salt + (seed << 6) + (seed >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace monrec
