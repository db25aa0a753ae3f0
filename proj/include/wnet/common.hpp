#pragma once

// Shared plumbing: error taxonomy and the deterministic RNG used everywhere.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wnet {

// CLI exit-code mapping: ParamError -> 1, FormatError/DataError -> 2,
// NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParamError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};

// SplitMix64 stream. State advances by the golden-ratio increment and the
// output is the Stafford mix13 finalizer; pure 64-bit integer arithmetic,
// so identical seeds give identical streams on every platform.
//
// Derived draws are built only from exact IEEE operations:
//   next_double : top 53 bits scaled by 2^-53, uniform in [0,1)
//   next_int    : floor(next_double()*n), clamped to n-1
//   normal      : Irwin-Hall sum of 12 uniforms minus 6
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // uniform in {0,...,n-1}, n > 0
    int next_int(int n) {
        int v = static_cast<int>(next_double() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    // approximate standard normal (Irwin-Hall 12)
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += next_double();
        return s - 6.0;
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

// FNV-1a, used to fingerprint configs and artifacts in run manifests.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace wnet
