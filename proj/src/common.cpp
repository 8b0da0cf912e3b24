#include "common.hpp"

#include <bit>

namespace masklm {

int64_t BitMatrix::count_ones() const {
    int64_t n = 0;
    size_t full = size_t(size()) / 8;
    for (size_t i = 0; i < full; ++i) n += std::popcount(unsigned(bytes_[i]));
    for (int64_t i = int64_t(full) * 8; i < size(); ++i)
        n += (bytes_[size_t(i) >> 3] >> (i & 7)) & 1u;
    return n;
}

int64_t BitMatrix::l1_distance(const BitMatrix& a, const BitMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrKind::invalid_argument, "BitMatrix size mismatch: " + std::to_string(a.rows()) + "x" +
                                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                            std::to_string(b.cols()));
    int64_t n = 0;
    size_t full = size_t(a.size()) / 8;
    for (size_t i = 0; i < full; ++i) n += std::popcount(unsigned(a.bytes_[i] ^ b.bytes_[i]));
    for (int64_t i = int64_t(full) * 8; i < a.size(); ++i) {
        unsigned bit_a = (a.bytes_[size_t(i) >> 3] >> (i & 7)) & 1u;
        unsigned bit_b = (b.bytes_[size_t(i) >> 3] >> (i & 7)) & 1u;
        n += bit_a ^ bit_b;
    }
    return n;
}

}  // namespace masklm
