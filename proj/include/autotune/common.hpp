#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace autotune {

// Error taxonomy. Every failure surfaced to callers derives from Error so the
// CLI can turn any of them into a one-line diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Unsupported container/codec/bit depth.
class FormatError : public Error {
public:
    using Error::Error;
};

// Structurally broken file (truncated chunk, bad sizes).
class CorruptFileError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Inputs that must be frame- or sample-aligned but are not.
class AlignmentError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient during training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Loss requested over an empty (fully masked) set.
class UndefinedLossError : public Error {
public:
    using Error::Error;
};

class IncompatibleCheckpointError : public Error {
public:
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// All randomness flows from one root seed. Substreams are addressed by a
// (tag, index...) path so that partial pipelines remain reproducible no
// matter which other streams were consumed before them.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag, std::uint64_t index = 0) {
    return splitmix64(splitmix64(root ^ tag) ^ index);
}

namespace seed_tag {
inline constexpr std::uint64_t kModelInit = 0x4d4f44454c494e49ull;
inline constexpr std::uint64_t kBatch = 0x42415443485f5f5full;
inline constexpr std::uint64_t kSplit = 0x53504c49545f5f5full;
inline constexpr std::uint64_t kEval = 0x4556414c5f5f5f5full;
inline constexpr std::uint64_t kGradCheck = 0x4752414443484b5full;
} // namespace seed_tag

// Deterministic RNG. mt19937_64 output is pinned by the standard, and the
// bounded mappings below avoid std::uniform_*_distribution (whose results
// vary across standard libraries).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, n). Unbiased via rejection sampling.
    std::uint32_t uniform_u32(std::uint32_t n) {
        if (n == 0) throw InvalidArgument("uniform_u32: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<std::uint32_t>(x % n);
    }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw InvalidArgument("uniform_int: empty range");
        const auto span = static_cast<std::uint32_t>(static_cast<std::int64_t>(hi) - lo + 1);
        return lo + static_cast<int>(uniform_u32(span));
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform_real() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

private:
    std::mt19937_64 eng_;
};

} // namespace autotune
