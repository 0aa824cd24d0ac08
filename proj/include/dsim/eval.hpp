#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsim/bm25.hpp"
#include "dsim/encoder.hpp"
#include "dsim/retrieval.hpp"
#include "dsim/vector_index.hpp"

namespace dsim {

inline constexpr std::array<std::size_t, 4> kRecallDepths{1, 5, 10, 100};
inline constexpr std::size_t kReportedTexts = 5;

/// A named search function over a corpus with known ids.
struct Retriever {
    std::string name;
    std::function<RetrievalResult(const std::string& query, std::size_t k)> search;
    std::function<bool(std::uint64_t id)> contains;
};

/// Encodes the query with the description encoder and searches the sentence index.
Retriever dense_retriever(const EncoderModel& description_encoder, const VectorIndex& index,
                          std::string name = "dense");
Retriever bm25_retriever(const Bm25Index& index, std::string name = "bm25");

struct EvalPair {
    std::string description;
    std::uint64_t gold_id = 0;
};

struct QueryRecord {
    std::string description;
    std::uint64_t gold_id = 0;
    std::optional<std::size_t> rank;  // 1-based; empty when beyond k_max
    std::vector<std::string> top_texts;
};

struct EvalReport {
    std::string system;
    std::size_t k_max = 100;
    std::array<double, kRecallDepths.size()> recall{};  // aligned with kRecallDepths
    double mrr = 0.0;
    std::vector<QueryRecord> queries;

    double recall_at(std::size_t k) const;
};

/// Throws Error on an unknown gold id.
EvalReport evaluate(const Retriever& retriever, std::span<const EvalPair> pairs,
                    std::size_t k_max = 100, std::size_t threads = 1);

/// One row per system: system,queries,recall@1,recall@5,recall@10,recall@100,mrr
std::string report_csv(std::span<const EvalReport> reports);
std::string report_table(std::span<const EvalReport> reports);
/// One JSON object per query with each system's rank and top texts.
std::string report_jsonl(std::span<const EvalReport> reports);

enum class Outcome { Win, Tie, Loss };

struct ComparisonRow {
    std::string description;
    std::uint64_t gold_id = 0;
    std::optional<std::size_t> rank_a;
    std::optional<std::size_t> rank_b;
    Outcome outcome = Outcome::Tie;  // from system a's point of view
};

struct Comparison {
    std::string system_a;
    std::string system_b;
    std::vector<ComparisonRow> rows;
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t losses = 0;
    std::array<double, kRecallDepths.size()> recall_delta{};  // a - b
    double mrr_delta = 0.0;
};

/// Paired per-query comparison; a lower rank wins, a miss loses to any hit.
/// Throws Error when the reports cover different queries.
Comparison compare(const EvalReport& a, const EvalReport& b);
std::string comparison_csv(const Comparison& comparison);
std::string comparison_table(const Comparison& comparison);

}  // namespace dsim
