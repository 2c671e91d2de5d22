#include <doctest.h>

#include <cmath>
#include <sstream>

#include "repbench/decimal.hpp"
#include "repbench/tokenizer.hpp"

using namespace repbench;

TEST_SUITE("tokenizer") {

TEST_CASE("vocabulary layout is dense and stable") {
    CHECK(vocab::kSize == 1087);
    CHECK(vocab::digit(0) == 4);
    CHECK(vocab::digit(999) == 1003);
    CHECK(vocab::PLUS == 1004);
    CHECK(vocab::exponent(-40) == 1006);
    CHECK(vocab::exponent(40) == 1086);
    CHECK(vocab::token_name(vocab::digit(854)) == "D854");
    CHECK(vocab::token_name(vocab::exponent(-2)) == "E-2");
    CHECK(vocab::token_name(0) == "PAD");

    std::istringstream manifest(vocab::manifest());
    std::string line;
    int lines = 0;
    while (std::getline(manifest, line)) ++lines;
    CHECK(lines == vocab::kSize);
}

TEST_CASE("integer codec definition cases") {
    CHECK(encode_uint(987654) == TokenSeq{vocab::digit(987), vocab::digit(654)});
    CHECK(encode_uint(1000000) == TokenSeq{vocab::digit(1), vocab::digit(0), vocab::digit(0)});
    CHECK(encode_uint(7) == TokenSeq{vocab::digit(7)});
    CHECK(encode_uint(0) == TokenSeq{vocab::digit(0)});
    CHECK_THROWS_AS(encode_uint(1000001), std::invalid_argument);

    CHECK(decode_uint(encode_uint(1000000)) == 1000000);
    CHECK(decode_uint(encode_uint(987654)) == 987654);
    CHECK_FALSE(decode_uint(TokenSeq{vocab::EOS}).has_value());
    CHECK_FALSE(decode_uint(TokenSeq{}).has_value());
}

TEST_CASE("integer codec round trip") {
    for (uint64_t x : {0ull, 1ull, 999ull, 1000ull, 999999ull, 1000000ull})
        CHECK(decode_uint(encode_uint(x)) == x);
    Rng rng(11);
    for (int i = 0; i < 100000; ++i) {
        uint64_t x = rng.below(1000001);
        REQUIRE(decode_uint(encode_uint(x)) == x);
    }
}

TEST_CASE("float triplet definition cases") {
    FloatTriplet t = encode_float(3.14);
    CHECK(t.sign == 1);
    CHECK(t.mantissa == 314);
    CHECK(t.exponent == -2);

    t = encode_float(-0.5);
    CHECK(t.sign == -1);
    CHECK(t.mantissa == 500);
    CHECK(t.exponent == -3);

    t = encode_float(0.0);
    CHECK(t.sign == 1);
    CHECK(t.mantissa == 0);
    CHECK(t.exponent == 0);

    CHECK_THROWS_AS(encode_float(5e43), std::invalid_argument);
    CHECK_NOTHROW(encode_float(5e42)); // 500 * 10^40
}

TEST_CASE("float token round trip to 3 significant digits") {
    TokenSeq tokens;
    append_float(-0.5, tokens);
    CHECK(tokens == TokenSeq{vocab::MINUS, vocab::digit(500), vocab::exponent(-3)});
    CHECK(decode_float(tokens) == -0.5);

    Rng rng(13);
    for (int i = 0; i < 100000; ++i) {
        double f = rng.uniform() * 2000.0 - 1000.0;
        TokenSeq seq;
        append_float(f, seq);
        auto back = decode_float(seq);
        REQUIRE(back.has_value());
        REQUIRE(*back == round_sig3(f));
    }

    CHECK_FALSE(decode_float(TokenSeq{vocab::digit(5), vocab::digit(5), vocab::digit(5)}).has_value());
    CHECK_FALSE(decode_float(TokenSeq{vocab::PLUS, vocab::digit(5), vocab::exponent(0)}).has_value());
}

TEST_CASE("decimal rounding is half away from zero on the mantissa") {
    CHECK(round_sig3(1.0) == 1.0);
    CHECK(round_sig3(123456.0) == 123000.0);
    CHECK(round_sig3(123500.0) == 124000.0);
    CHECK(round_sig3(-123500.0) == -124000.0);
    CHECK(round_sig3(0.0) == 0.0);
    CHECK(round_sig3(9.999) == 10.0);
    CHECK(decompose_sig3(10.0).mantissa == 100);
    CHECK(decompose_sig3(10.0).exp10 == -1);
    // idempotence on already-rounded values
    Rng rng(3);
    for (int i = 0; i < 100000; ++i) {
        double f = round_sig3(rng.uniform() * 20.0 - 10.0);
        REQUIRE(round_sig3(f) == f);
    }
}

TEST_CASE("sequence assembly") {
    GcdExample gcd_ex{{8, 12}, 4};
    auto [src, tgt] = build_sequences(TaskKind::Gcd, TaskExample(gcd_ex));
    CHECK(src == TokenSeq{vocab::SEP, vocab::digit(8), vocab::SEP, vocab::digit(12)});
    CHECK(tgt == TokenSeq{vocab::digit(4), vocab::EOS});

    ModMulExample mm{{67, 999999}, 0};
    auto [msrc, mtgt] = build_sequences(TaskKind::ModMul, TaskExample(mm));
    CHECK(mtgt == TokenSeq{vocab::digit(0), vocab::EOS});
    CHECK(msrc.size() == 5); // SEP D67 SEP D999 D999

    Rng rng(2);
    EigenExample ex = make_eigen_example(rng, 5);
    auto [esrc, etgt] = build_sequences(TaskKind::Eigen, TaskExample(ex));
    CHECK(esrc.size() == 75); // 3 n^2
    CHECK(etgt.size() == 16); // 3 n + 1
    CHECK(etgt.back() == vocab::EOS);
}

TEST_CASE("pair source length bounds") {
    Rng rng(21);
    CurationSpec uniform;
    for (int i = 0; i < 5000; ++i) {
        GcdExample ex = make_gcd_example(rng, uniform);
        auto [src, tgt] = build_sequences(TaskKind::Gcd, TaskExample(ex));
        if (ex.pair.a < 1000000 && ex.pair.b < 1000000) CHECK(src.size() <= 6);
        CHECK(src.size() <= 8);
        CHECK(tgt.size() <= 4);
    }
    GcdExample boundary{{1000000, 1000000}, 1000000};
    auto [bsrc, btgt] = build_sequences(TaskKind::Gcd, TaskExample(boundary));
    CHECK(bsrc.size() == 8);
    CHECK(btgt.size() == 4);
}

} // TEST_SUITE
