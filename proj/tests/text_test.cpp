#include <gtest/gtest.h>

#include <random>

#include "gptgeo/csv.hpp"
#include "gptgeo/text.hpp"

using namespace gptgeo;

TEST(NormalizeTitle, AppliesSymbolSpaceAndCaseRules) {
    EXPECT_EQ(text::normalize_title("Playing Atari, with Deep-RL!"), "playing atari with deep rl");
    EXPECT_EQ(text::normalize_title(""), "");
    EXPECT_EQ(text::normalize_title("α—β   Pruning"), "α β pruning");
    EXPECT_EQ(text::normalize_title("  ÉCOLE   Polytechnique  "), "école polytechnique");
    EXPECT_EQ(text::normalize_title("ΑΒΓ Δ"), "αβγ δ");
    EXPECT_EQ(text::normalize_title("100% of (3) tests"), "100 of 3 tests");
}

TEST(NormalizeTitle, IsIdempotentOnRandomText) {
    std::mt19937 rng(7);
    const std::u32string alphabet = U"aZ9 ,.-_!?()éÉßαΩЖж—…中文'\"\t";
    for (int trial = 0; trial < 2000; ++trial) {
        std::u32string s;
        const int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        const auto once = text::normalize_title(text::encode_utf8(s));
        EXPECT_EQ(text::normalize_title(once), once);
        EXPECT_EQ(once.find("  "), std::string::npos);
        if (!once.empty()) {
            EXPECT_NE(once.front(), ' ');
            EXPECT_NE(once.back(), ' ');
        }
    }
}

TEST(Utf8, MalformedBytesBecomeSeparators) {
    EXPECT_EQ(text::normalize_title(std::string("ab\xff" "cd")), "ab cd");
    EXPECT_EQ(text::normalize_title(std::string("ab\xe2\x82")), "ab");
}

TEST(Csv, QuotesAndParsesBack) {
    csv::Writer w({"a", "b"});
    w.row({"x,y", "say \"hi\""});
    w.row({"", "3"});
    const auto rows = csv::parse(w.str());
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][0], "x,y");
    EXPECT_EQ(rows[1][1], "say \"hi\"");
    EXPECT_EQ(rows[2][0], "");
    EXPECT_EQ(rows[2][1], "3");
}

TEST(Csv, NumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 2.0, 1e-300, -0.0, 123456789.125}) {
        EXPECT_EQ(csv::parse_number(csv::format_number(v)), v == 0.0 ? 0.0 : v);
    }
    EXPECT_EQ(csv::format_number(2.0), "2");
}
