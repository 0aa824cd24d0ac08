#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dsim {

using TokenId = std::uint32_t;

/// Hashing tokenizer shared by the dense encoder and the BM25 index.
///
/// Text is split on Unicode whitespace and punctuation, optionally case
/// folded, and each surface token is hashed (FNV-1a, 64 bit) into
/// [1, vocab_size). Id 0 is reserved for UNK, which is what a text without
/// any token maps to, so mean pooling is always defined.
class Tokenizer {
public:
    static constexpr TokenId kUnk = 0;

    explicit Tokenizer(std::uint32_t vocab_size = 65536, bool lowercase = true);

    std::uint32_t vocab_size() const noexcept { return vocab_size_; }
    bool lowercase() const noexcept { return lowercase_; }

    /// Normalized surface tokens, possibly empty.
    std::vector<std::string> split(std::string_view text) const;

    /// Token ids; never empty.
    std::vector<TokenId> tokenize(std::string_view text) const;

    TokenId token_id(std::string_view token) const noexcept;

    friend bool operator==(const Tokenizer&, const Tokenizer&) = default;

private:
    std::uint32_t vocab_size_;
    bool lowercase_;
};

}  // namespace dsim
