#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsim/retrieval.hpp"
#include "dsim/tokenizer.hpp"

namespace dsim {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    friend bool operator==(const Posting&, const Posting&) = default;
};

/// Okapi BM25 over an inverted index. Terms come from Tokenizer::split, the
/// same surface tokenization the dense encoder hashes. Document ids are
/// positions in the build corpus.
///
/// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
/// score(d, q) = sum over distinct query terms of
///               idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))
class Bm25Index {
public:
    Bm25Index() = default;

    static Bm25Index build(std::span<const std::string> texts, Bm25Params params = {},
                           bool lowercase = true);

    std::size_t doc_count() const noexcept { return doc_lengths_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const Bm25Params& params() const noexcept { return params_; }
    std::span<const std::uint32_t> doc_lengths() const noexcept { return doc_lengths_; }
    std::string_view text(std::size_t doc) const { return texts_.at(doc); }
    const std::map<std::string, std::vector<Posting>>& postings() const noexcept { return postings_; }

    /// Distinct terms of a query, in first-occurrence order.
    std::vector<std::string> query_terms(std::string_view query) const;

    double idf(std::string_view term) const;

    /// Documents matching at least one query term, top-k by score, ties by id.
    RetrievalResult search(std::string_view query, std::size_t k) const;

    std::vector<std::uint8_t> serialize() const;
    static Bm25Index deserialize(std::vector<std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

    friend bool operator==(const Bm25Index&, const Bm25Index&) = default;

private:
    Bm25Params params_;
    Tokenizer tokenizer_{2, true};
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    std::vector<std::string> texts_;
    std::map<std::string, std::vector<Posting>> postings_;
};

}  // namespace dsim
