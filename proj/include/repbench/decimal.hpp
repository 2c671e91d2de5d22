#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace repbench {

inline double pow10i(int k) {
    // Powers up to 1e22 are exact doubles; compose beyond that.
    static const double table[] = {1e0,  1e1,  1e2,  1e3,  1e4,  1e5,  1e6,  1e7,
                                   1e8,  1e9,  1e10, 1e11, 1e12, 1e13, 1e14, 1e15,
                                   1e16, 1e17, 1e18, 1e19, 1e20, 1e21, 1e22};
    if (k < 0) return 1.0 / pow10i(-k);
    if (k <= 22) return table[k];
    return table[22] * pow10i(k - 22);
}

// x * 10^k with a single floating-point rounding whenever |k| <= 22.
inline double scale10(double x, int k) {
    if (k >= 0) return x * pow10i(k);
    return -k <= 22 ? x / pow10i(-k) : x * pow10i(k);
}

// Sign/mantissa/exponent form of a 3-significant-digit decimal:
// value = sign * mantissa * 10^exp10, mantissa in [100, 999] or 0.
// Zero is canonically (+1, 0, 0).
struct SigDecimal {
    int sign = 1;
    int mantissa = 0;
    int exp10 = 0;

    double value() const {
        if (mantissa == 0) return 0.0;
        return sign * scale10(static_cast<double>(mantissa), exp10);
    }
};

// Round to 3 significant decimal digits, half away from zero on the mantissa.
inline SigDecimal decompose_sig3(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("decompose_sig3: non-finite value");
    if (x == 0.0) return SigDecimal{};
    int sign = x < 0.0 ? -1 : 1;
    double ax = std::fabs(x);
    int e = static_cast<int>(std::floor(std::log10(ax)));
    long m = std::lround(scale10(ax, 2 - e)); // lround = round half away from zero
    while (m >= 1000) {
        ++e;
        m = std::lround(scale10(ax, 2 - e));
    }
    while (m < 100) {
        --e;
        m = std::lround(scale10(ax, 2 - e));
    }
    return SigDecimal{sign, static_cast<int>(m), e - 2};
}

inline double round_sig3(double x) { return decompose_sig3(x).value(); }

} // namespace repbench
