#include "repbench/tokenizer.hpp"

#include <sstream>
#include <stdexcept>

#include "repbench/decimal.hpp"

namespace repbench {

namespace vocab {

std::string token_name(int32_t id) {
    switch (id) {
        case PAD: return "PAD";
        case BOS: return "BOS";
        case EOS: return "EOS";
        case SEP: return "SEP";
        case PLUS: return "PLUS";
        case MINUS: return "MINUS";
        default: break;
    }
    if (is_digit(id)) return "D" + std::to_string(digit_value(id));
    if (is_exponent(id)) {
        int e = exponent_value(id);
        return (e >= 0 ? "E+" : "E-") + std::to_string(e >= 0 ? e : -e);
    }
    return "<invalid:" + std::to_string(id) + ">";
}

std::string manifest() {
    std::ostringstream os;
    for (int32_t id = 0; id < kSize; ++id) os << id << '\t' << token_name(id) << '\n';
    return os.str();
}

} // namespace vocab

void append_uint(uint64_t x, TokenSeq& out) {
    if (x > kMaxInput) throw std::invalid_argument("encode_uint: value exceeds 1e6");
    if (x == 0) {
        out.push_back(vocab::digit(0));
        return;
    }
    int32_t digits[3];
    int n = 0;
    while (x > 0) {
        digits[n++] = vocab::digit(static_cast<int>(x % 1000));
        x /= 1000;
    }
    while (n > 0) out.push_back(digits[--n]);
}

TokenSeq encode_uint(uint64_t x) {
    TokenSeq out;
    append_uint(x, out);
    return out;
}

std::optional<uint64_t> decode_uint(std::span<const int32_t> tokens) {
    if (tokens.empty() || tokens.size() > 6) return std::nullopt; // valid encodings use <= 3 digits
    uint64_t x = 0;
    for (int32_t id : tokens) {
        if (!vocab::is_digit(id)) return std::nullopt;
        x = x * 1000 + static_cast<uint64_t>(vocab::digit_value(id));
    }
    return x;
}

double FloatTriplet::value() const {
    if (mantissa == 0) return 0.0;
    return sign * scale10(static_cast<double>(mantissa), exponent);
}

FloatTriplet encode_float(double f) {
    SigDecimal d = decompose_sig3(f);
    if (d.exp10 < vocab::kExpMin || d.exp10 > vocab::kExpMax)
        throw std::invalid_argument("encode_float: exponent outside [-40, 40]");
    return FloatTriplet{d.sign, d.mantissa, d.mantissa == 0 ? 0 : d.exp10};
}

void append_float(double f, TokenSeq& out) {
    FloatTriplet t = encode_float(f);
    out.push_back(t.sign >= 0 ? vocab::PLUS : vocab::MINUS);
    out.push_back(vocab::digit(t.mantissa));
    out.push_back(vocab::exponent(t.exponent));
}

std::optional<double> decode_float(std::span<const int32_t> t) {
    if (t.size() != 3) return std::nullopt;
    if (t[0] != vocab::PLUS && t[0] != vocab::MINUS) return std::nullopt;
    if (!vocab::is_digit(t[1]) || !vocab::is_exponent(t[2])) return std::nullopt;
    int m = vocab::digit_value(t[1]);
    if (m != 0 && m < 100) return std::nullopt; // mantissa is 0 or [100, 999]
    FloatTriplet trip{t[0] == vocab::PLUS ? 1 : -1, m, vocab::exponent_value(t[2])};
    return trip.value();
}

std::optional<std::vector<double>> decode_float_list(std::span<const int32_t> tokens) {
    if (tokens.size() % 3 != 0) return std::nullopt;
    std::vector<double> out;
    out.reserve(tokens.size() / 3);
    for (size_t i = 0; i < tokens.size(); i += 3) {
        auto v = decode_float(tokens.subspan(i, 3));
        if (!v) return std::nullopt;
        out.push_back(*v);
    }
    return out;
}

namespace {

std::pair<TokenSeq, TokenSeq> pair_sequences(const IntPair& p) {
    TokenSeq src;
    src.push_back(vocab::SEP);
    append_uint(p.a, src);
    src.push_back(vocab::SEP);
    append_uint(p.b, src);
    return {std::move(src), {}};
}

} // namespace

std::pair<TokenSeq, TokenSeq> build_sequences(TaskKind task, const TaskExample& example) {
    switch (task) {
        case TaskKind::Gcd: {
            const auto& ex = std::get<GcdExample>(example);
            auto [src, tgt] = pair_sequences(ex.pair);
            append_uint(ex.g, tgt);
            tgt.push_back(vocab::EOS);
            return {std::move(src), std::move(tgt)};
        }
        case TaskKind::ModMul: {
            const auto& ex = std::get<ModMulExample>(example);
            auto [src, tgt] = pair_sequences(ex.pair);
            tgt.push_back(vocab::digit(ex.r));
            tgt.push_back(vocab::EOS);
            return {std::move(src), std::move(tgt)};
        }
        case TaskKind::Eigen: {
            const auto& ex = std::get<EigenExample>(example);
            TokenSeq src, tgt;
            src.reserve(static_cast<size_t>(ex.matrix.n) * ex.matrix.n * 3);
            for (double v : ex.matrix.entries) append_float(v, src);
            for (double v : ex.eigenvalues) append_float(v, tgt);
            tgt.push_back(vocab::EOS);
            return {std::move(src), std::move(tgt)};
        }
    }
    throw std::logic_error("build_sequences: unhandled task");
}

} // namespace repbench
