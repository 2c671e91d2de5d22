#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repbench/tasks.hpp"

namespace repbench {

using TokenSeq = std::vector<int32_t>;

// Static alphabet shared by every task: 4 specials, 1000 base-1000 digits,
// 2 signs, 81 powers of ten. Ids are dense and stable.
namespace vocab {

constexpr int32_t PAD = 0;
constexpr int32_t BOS = 1;
constexpr int32_t EOS = 2;
constexpr int32_t SEP = 3;
constexpr int32_t DIGIT0 = 4; // D0..D999 -> 4..1003
constexpr int32_t PLUS = 1004;
constexpr int32_t MINUS = 1005;
constexpr int32_t EXP0 = 1006;     // E-40..E+40 -> 1006..1086
constexpr int kExpMin = -40, kExpMax = 40;
constexpr int32_t kSize = 1087; // 4 + 1000 + 2 + 81

inline int32_t digit(int d) { return DIGIT0 + d; }
inline bool is_digit(int32_t id) { return id >= DIGIT0 && id < DIGIT0 + 1000; }
inline int digit_value(int32_t id) { return id - DIGIT0; }
inline int32_t exponent(int e) { return EXP0 + (e - kExpMin); }
inline bool is_exponent(int32_t id) { return id >= EXP0 && id < EXP0 + 81; }
inline int exponent_value(int32_t id) { return id - EXP0 + kExpMin; }

std::string token_name(int32_t id);
std::string manifest(); // "id<TAB>name" per line, for logged predictions

} // namespace vocab

// --- Integer codec (base 1000, most significant digit first) ----------------

TokenSeq encode_uint(uint64_t x); // accepts [0, 1e6]; throws outside
void append_uint(uint64_t x, TokenSeq& out);
std::optional<uint64_t> decode_uint(std::span<const int32_t> tokens);

// --- P1000 float codec: value = sign * mantissa * 10^exp --------------------

struct FloatTriplet {
    int sign = 1;     // +1 / -1
    int mantissa = 0; // 0 or [100, 999]
    int exponent = 0; // [-40, 40]

    double value() const;
};

FloatTriplet encode_float(double f); // rounds to 3 significant digits first
void append_float(double f, TokenSeq& out); // 3 tokens: sign, mantissa digit, exponent
std::optional<double> decode_float(std::span<const int32_t> three_tokens);

// Decode a run of P1000 triplets; fails on malformed or trailing tokens.
std::optional<std::vector<double>> decode_float_list(std::span<const int32_t> tokens);

// --- Task sequence assembly --------------------------------------------------

// gcd/modmul source: SEP digits(a) SEP digits(b); target: digits / residue, EOS.
// eigen source: row-major entries as P1000 triplets; target: descending
// eigenvalues as triplets, EOS.
std::pair<TokenSeq, TokenSeq> build_sequences(TaskKind task, const TaskExample& example);

} // namespace repbench
