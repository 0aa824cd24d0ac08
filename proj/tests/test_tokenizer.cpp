#include <gtest/gtest.h>

#include "dsim/random.hpp"
#include "dsim/tokenizer.hpp"

namespace dsim {
namespace {

TEST(Tokenizer, CaseFolding) {
    const Tokenizer tok;
    const auto ids = tok.tokenize("A a");
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_EQ(ids[0], ids[1]);
    const Tokenizer cased(65536, false);
    const auto cased_ids = cased.tokenize("A a");
    ASSERT_EQ(cased_ids.size(), 2u);
    EXPECT_NE(cased_ids[0], cased_ids[1]);
}

TEST(Tokenizer, EmptyTextIsUnk) {
    const Tokenizer tok;
    EXPECT_EQ(tok.tokenize(""), std::vector<TokenId>{Tokenizer::kUnk});
    EXPECT_EQ(tok.tokenize(" .,;!? \t\n"), std::vector<TokenId>{Tokenizer::kUnk});
    EXPECT_TRUE(tok.split("").empty());
}

TEST(Tokenizer, StableIds) {
    const Tokenizer tok;
    const auto a = tok.tokenize("x y z");
    EXPECT_EQ(a.size(), 3u);
    EXPECT_EQ(a, tok.tokenize("x y z"));
    EXPECT_EQ(a, Tokenizer().tokenize("x y z"));
}

TEST(Tokenizer, SplitsOnWhitespaceAndPunctuation) {
    const Tokenizer tok;
    EXPECT_EQ(tok.split("Hello, world! It's (very) well-known."),
              (std::vector<std::string>{"hello", "world", "it", "s", "very", "well", "known"}));
    EXPECT_EQ(tok.split("a\xc2\xa0" "b\xe3\x80\x80" "c"), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(tok.split("\xe2\x80\x9cquoted\xe2\x80\x9d \xe2\x80\x94 dash"),
              (std::vector<std::string>{"quoted", "dash"}));
}

TEST(Tokenizer, FoldsNonAsciiCase) {
    const Tokenizer tok;
    EXPECT_EQ(tok.split("\xc3\x89" "COLE"), std::vector<std::string>{"\xc3\xa9" "cole"});
    EXPECT_EQ(tok.split("\xce\xa3\xce\x9f\xce\xa6\xce\x99\xce\x91"),
              tok.split("\xcf\x83\xce\xbf\xcf\x86\xce\xb9\xce\xb1"));
    EXPECT_EQ(tok.split("\xd0\x9c\xd0\x98\xd0\xa0"), tok.split("\xd0\xbc\xd0\xb8\xd1\x80"));
}

TEST(Tokenizer, InvalidUtf8DoesNotThrow) {
    const Tokenizer tok;
    EXPECT_NO_THROW(tok.tokenize("ab\xff\xfe cd \xc3"));
    EXPECT_FALSE(tok.tokenize("ab\xff\xfe cd \xc3").empty());
}

TEST(Tokenizer, IdsInRange) {
    Rng rng(4);
    for (std::uint32_t vocab : {2u, 3u, 97u, 65536u}) {
        const Tokenizer tok(vocab);
        for (int i = 0; i < 500; ++i) {
            std::string word;
            for (int c = 0; c < 1 + static_cast<int>(rng.below(8)); ++c) word += static_cast<char>('a' + rng.below(26));
            const auto id = tok.token_id(word);
            EXPECT_GE(id, 1u);
            EXPECT_LT(id, vocab);
        }
    }
    EXPECT_THROW(Tokenizer(1), std::invalid_argument);
}

}  // namespace
}  // namespace dsim
