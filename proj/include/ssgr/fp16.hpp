#pragma once

#include <cstdint>
#include <cstring>

namespace ssgr {

// IEEE 754 binary16 <-> binary64 conversion. Widening is exact; narrowing
// rounds to nearest, ties to even.

inline double fp16_to_double(std::uint16_t h) {
    const std::uint32_t sign = (h >> 15) & 1u;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    const std::uint32_t frac = h & 0x3ffu;

    std::uint64_t bits;
    if (exp == 0) {
        if (frac == 0) {
            bits = static_cast<std::uint64_t>(sign) << 63; // signed zero
        } else {
            // subnormal: value = frac * 2^-24
            int e = -15;
            std::uint32_t f = frac;
            while ((f & 0x400u) == 0) {
                f <<= 1;
                --e;
            }
            f &= 0x3ffu;
            const std::uint64_t dexp = static_cast<std::uint64_t>(e + 1023);
            bits = (static_cast<std::uint64_t>(sign) << 63) | (dexp << 52) |
                   (static_cast<std::uint64_t>(f) << 42);
        }
    } else if (exp == 0x1f) {
        bits = (static_cast<std::uint64_t>(sign) << 63) | (0x7ffull << 52) |
               (static_cast<std::uint64_t>(frac) << 42);
    } else {
        const std::uint64_t dexp = static_cast<std::uint64_t>(exp) - 15 + 1023;
        bits = (static_cast<std::uint64_t>(sign) << 63) | (dexp << 52) |
               (static_cast<std::uint64_t>(frac) << 42);
    }
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

inline std::uint16_t double_to_fp16(double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 63) << 15);
    const std::int64_t exp = static_cast<std::int64_t>((bits >> 52) & 0x7ff);
    std::uint64_t frac = bits & 0xfffffffffffffull;

    if (exp == 0x7ff) { // inf / nan
        return static_cast<std::uint16_t>(sign | 0x7c00u | (frac ? 0x200u : 0u));
    }

    std::int64_t e = exp - 1023; // unbiased
    if (exp == 0 && frac == 0) return sign;

    // Normalized target exponent range for fp16: [-14, 15].
    if (e > 15) return static_cast<std::uint16_t>(sign | 0x7c00u); // overflow -> inf
    std::uint64_t mant = frac | (exp != 0 ? (1ull << 52) : 0ull);

    int shift;
    std::uint16_t out_exp;
    if (e < -14) {
        // subnormal in fp16
        shift = static_cast<int>(42 + (-14 - e));
        if (shift > 63) return sign; // underflow to zero
        out_exp = 0;
    } else {
        shift = 42;
        out_exp = static_cast<std::uint16_t>(e + 15);
    }

    const std::uint64_t kept = mant >> shift;
    const std::uint64_t rem = mant & ((1ull << shift) - 1);
    const std::uint64_t half = 1ull << (shift - 1);
    std::uint64_t rounded = kept;
    if (rem > half || (rem == half && (kept & 1))) ++rounded; // round to nearest even

    std::uint64_t mant16 = rounded;
    if (out_exp == 0) {
        if (mant16 >= 0x400) { // rounded up into normal range
            return static_cast<std::uint16_t>(sign | (1u << 10) | (mant16 & 0x3ffu));
        }
        return static_cast<std::uint16_t>(sign | mant16);
    }
    if (mant16 >= 0x800) { // carry out of mantissa
        mant16 >>= 1;
        ++out_exp;
        if (out_exp >= 0x1f) return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    return static_cast<std::uint16_t>(sign | (out_exp << 10) | (mant16 & 0x3ffu));
}

} // namespace ssgr
