#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsim {

struct SearchHit {
    std::uint64_t id = 0;
    std::string text;
    double score = 0.0;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Ranked hits: scores non-increasing, ties by ascending id.
struct RetrievalResult {
    std::vector<SearchHit> entries;
    std::size_t k = 0;

    friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Strict ranking order used by every retriever.
inline bool ranks_before(double score_a, std::uint64_t id_a, double score_b, std::uint64_t id_b) {
    return score_a > score_b || (score_a == score_b && id_a < id_b);
}

}  // namespace dsim
