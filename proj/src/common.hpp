#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace masklm {

enum class ErrKind {
    invalid_argument,  // bad shapes, bad flags, out-of-range ids
    io,                // filesystem failures
    format,            // malformed artifact / dataset files
    internal,          // bugs and numeric error states (NaN, ...)
};

// Token ids below kNumReservedIds are reserved in every vocabulary.
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kClsId = 1;
inline constexpr int32_t kSepId = 2;
inline constexpr int32_t kMaskId = 3;
inline constexpr int32_t kNumReservedIds = 4;

class Error : public std::runtime_error {
public:
    Error(ErrKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrKind kind() const { return kind_; }

private:
    ErrKind kind_;
};

[[noreturn]] inline void fail(ErrKind kind, const std::string& msg) { throw Error(kind, msg); }

// Deterministic RNG. The engine (mt19937_64) is fully specified by the
// standard; the float/normal conversions below are our own so that every
// sampled value is reproducible bit-for-bit across platforms and compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1) with 24 bits of mantissa
    float next_float() { return float(eng_() >> 40) * (1.0f / 16777216.0f); }

    // uniform in [0,1) with 53 bits
    double next_double() { return double(eng_() >> 11) * (1.0 / 9007199254740992.0); }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return eng_() % n; }

    // standard normal via Box-Muller (the spare value is discarded)
    float next_normal() {
        double u1 = (double(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        double u2 = (double(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
        return float(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // independent child stream, a pure function of (construction seed, stream id)
    Rng derive(uint64_t stream) const {
        uint64_t z = seed_ ^ (stream + 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_;
};

// Row-major packed binary matrix. Bit (r,c) lives at index r*cols+c,
// LSB-first within each byte; the payload is zero-padded to a whole byte.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(int64_t rows, int64_t cols)
        : rows_(rows), cols_(cols), bytes_((size_t(rows) * size_t(cols) + 7) / 8, 0) {}

    int64_t rows() const { return rows_; }
    int64_t cols() const { return cols_; }
    int64_t size() const { return rows_ * cols_; }

    bool get(int64_t r, int64_t c) const {
        size_t i = size_t(r) * size_t(cols_) + size_t(c);
        return (bytes_[i >> 3] >> (i & 7)) & 1u;
    }
    void set(int64_t r, int64_t c, bool v) {
        size_t i = size_t(r) * size_t(cols_) + size_t(c);
        if (v)
            bytes_[i >> 3] |= uint8_t(1u << (i & 7));
        else
            bytes_[i >> 3] &= uint8_t(~(1u << (i & 7)));
    }

    int64_t count_ones() const;
    int64_t count_zeros() const { return size() - count_ones(); }

    // entrywise L1 distance between two binary matrices = XOR popcount
    static int64_t l1_distance(const BitMatrix& a, const BitMatrix& b);

    const std::vector<uint8_t>& bytes() const { return bytes_; }
    std::vector<uint8_t>& bytes() { return bytes_; }

    bool operator==(const BitMatrix& o) const = default;

private:
    int64_t rows_ = 0, cols_ = 0;
    std::vector<uint8_t> bytes_;
};

}  // namespace masklm
