#include "dsim/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "dsim/error.hpp"
#include "dsim/parallel.hpp"
#include "json.hpp"

namespace dsim {

namespace {

std::string fixed(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    return buf;
}

std::string rank_text(const std::optional<std::size_t>& rank) {
    return rank ? std::to_string(*rank) : std::string("miss");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

}  // namespace

Retriever dense_retriever(const EncoderModel& description_encoder, const VectorIndex& index,
                          std::string name) {
    if (description_encoder.dim() != index.dim()) {
        throw DimensionMismatch("description encoder dim " +
                                std::to_string(description_encoder.dim()) +
                                " does not match index dim " + std::to_string(index.dim()));
    }
    return {std::move(name),
            [&description_encoder, &index](const std::string& query, std::size_t k) {
                return index.search(description_encoder.encode(query).vector, k);
            },
            [&index](std::uint64_t id) { return index.contains(id); }};
}

Retriever bm25_retriever(const Bm25Index& index, std::string name) {
    return {std::move(name),
            [&index](const std::string& query, std::size_t k) { return index.search(query, k); },
            [&index](std::uint64_t id) { return id < index.doc_count(); }};
}

double EvalReport::recall_at(std::size_t k) const {
    for (std::size_t i = 0; i < kRecallDepths.size(); ++i) {
        if (kRecallDepths[i] == k) return recall[i];
    }
    throw std::invalid_argument("recall depth " + std::to_string(k) + " is not reported");
}

EvalReport evaluate(const Retriever& retriever, std::span<const EvalPair> pairs,
                    std::size_t k_max, std::size_t threads) {
    if (k_max == 0) throw std::invalid_argument("evaluate: k_max must be >= 1");
    for (const auto& p : pairs) {
        if (!retriever.contains(p.gold_id)) {
            throw Error("unknown gold id " + std::to_string(p.gold_id) + " for system '" +
                        retriever.name + "'");
        }
    }

    EvalReport report;
    report.system = retriever.name;
    report.k_max = k_max;
    report.queries.resize(pairs.size());
    parallel_chunks(pairs.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto result = retriever.search(pairs[i].description, k_max);
            QueryRecord& rec = report.queries[i];
            rec.description = pairs[i].description;
            rec.gold_id = pairs[i].gold_id;
            for (std::size_t r = 0; r < result.entries.size() && r < k_max; ++r) {
                if (r < kReportedTexts) rec.top_texts.push_back(result.entries[r].text);
                if (!rec.rank && result.entries[r].id == pairs[i].gold_id) rec.rank = r + 1;
            }
        }
    });

    if (pairs.empty()) return report;
    std::array<std::size_t, kRecallDepths.size()> hits{};
    double reciprocal = 0.0;
    for (const auto& rec : report.queries) {
        if (!rec.rank) continue;
        reciprocal += 1.0 / static_cast<double>(*rec.rank);
        for (std::size_t i = 0; i < kRecallDepths.size(); ++i) {
            if (*rec.rank <= kRecallDepths[i]) ++hits[i];
        }
    }
    const double n = static_cast<double>(pairs.size());
    for (std::size_t i = 0; i < kRecallDepths.size(); ++i) report.recall[i] = hits[i] / n;
    report.mrr = reciprocal / n;
    return report;
}

std::string report_csv(std::span<const EvalReport> reports) {
    std::string out = "system,queries";
    for (const auto k : kRecallDepths) out += ",recall@" + std::to_string(k);
    out += ",mrr\n";
    for (const auto& r : reports) {
        out += csv_field(r.system) + "," + std::to_string(r.queries.size());
        for (const double v : r.recall) out += "," + fixed(v);
        out += "," + fixed(r.mrr) + "\n";
    }
    return out;
}

std::string report_table(std::span<const EvalReport> reports) {
    std::size_t width = 6;
    for (const auto& r : reports) width = std::max(width, r.system.size());
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %8s %9s %9s %10s %10s %8s\n", static_cast<int>(width),
                  "system", "queries", "recall@1", "recall@5", "recall@10", "recall@100", "mrr");
    out << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-*s %8zu %9.4f %9.4f %10.4f %10.4f %8.4f\n",
                      static_cast<int>(width), r.system.c_str(), r.queries.size(), r.recall[0],
                      r.recall[1], r.recall[2], r.recall[3], r.mrr);
        out << buf;
    }
    return out.str();
}

std::string report_jsonl(std::span<const EvalReport> reports) {
    if (reports.empty()) return {};
    const std::size_t n = reports.front().queries.size();
    for (const auto& r : reports) {
        if (r.queries.size() != n) throw Error("report_jsonl: reports cover different query sets");
    }
    std::string out;
    for (std::size_t q = 0; q < n; ++q) {
        nlohmann::ordered_json row;
        row["description"] = reports.front().queries[q].description;
        row["gold_id"] = reports.front().queries[q].gold_id;
        nlohmann::ordered_json systems = nlohmann::ordered_json::object();
        for (const auto& r : reports) {
            const auto& rec = r.queries[q];
            nlohmann::ordered_json s;
            s["rank"] = rec.rank ? nlohmann::ordered_json(*rec.rank) : nlohmann::ordered_json(nullptr);
            s["top"] = rec.top_texts;
            systems[r.system] = std::move(s);
        }
        row["systems"] = std::move(systems);
        out += row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

Comparison compare(const EvalReport& a, const EvalReport& b) {
    if (a.queries.size() != b.queries.size()) {
        throw Error("compare: mismatched query sets (" + std::to_string(a.queries.size()) + " vs " +
                    std::to_string(b.queries.size()) + " queries)");
    }
    Comparison c;
    c.system_a = a.system;
    c.system_b = b.system;
    for (std::size_t q = 0; q < a.queries.size(); ++q) {
        const auto& qa = a.queries[q];
        const auto& qb = b.queries[q];
        if (qa.description != qb.description || qa.gold_id != qb.gold_id) {
            throw Error("compare: mismatched query sets at query " + std::to_string(q));
        }
        ComparisonRow row{qa.description, qa.gold_id, qa.rank, qb.rank, Outcome::Tie};
        const std::size_t ra = qa.rank.value_or(SIZE_MAX);
        const std::size_t rb = qb.rank.value_or(SIZE_MAX);
        if (ra < rb) {
            row.outcome = Outcome::Win;
            ++c.wins;
        } else if (ra > rb) {
            row.outcome = Outcome::Loss;
            ++c.losses;
        } else {
            ++c.ties;
        }
        c.rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < kRecallDepths.size(); ++i) c.recall_delta[i] = a.recall[i] - b.recall[i];
    c.mrr_delta = a.mrr - b.mrr;
    return c;
}

namespace {

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Win: return "win";
        case Outcome::Tie: return "tie";
        case Outcome::Loss: return "loss";
    }
    return "?";
}

}  // namespace

std::string comparison_csv(const Comparison& c) {
    std::string out = "query,gold_id,rank_" + csv_field(c.system_a) + ",rank_" +
                      csv_field(c.system_b) + ",outcome\n";
    for (const auto& row : c.rows) {
        out += csv_field(row.description) + "," + std::to_string(row.gold_id) + "," +
               rank_text(row.rank_a) + "," + rank_text(row.rank_b) + "," +
               outcome_name(row.outcome) + "\n";
    }
    out += "summary,,wins=" + std::to_string(c.wins) + ",ties=" + std::to_string(c.ties) +
           ",losses=" + std::to_string(c.losses) + "\n";
    return out;
}

std::string comparison_table(const Comparison& c) {
    std::ostringstream out;
    out << c.system_a << " vs " << c.system_b << ": " << c.wins << " wins, " << c.ties
        << " ties, " << c.losses << " losses over " << c.rows.size() << " queries\n";
    char buf[128];
    for (std::size_t i = 0; i < kRecallDepths.size(); ++i) {
        std::snprintf(buf, sizeof buf, "  delta recall@%-3zu %+.4f\n", kRecallDepths[i],
                      c.recall_delta[i]);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "  delta mrr        %+.4f\n", c.mrr_delta);
    out << buf;
    return out.str();
}

}  // namespace dsim
