#include "dsim/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "dsim/binary_io.hpp"
#include "dsim/error.hpp"

namespace dsim {

namespace {

constexpr io::Magic kBm25Magic{'D', 'B', 'M', '2'};
constexpr std::uint32_t kBm25Version = 1;

}  // namespace

Bm25Index Bm25Index::build(std::span<const std::string> texts, Bm25Params params,
                           bool lowercase) {
    if (!(params.k1 >= 0.0) || !(params.b >= 0.0 && params.b <= 1.0)) {
        throw std::invalid_argument("bm25: need k1 >= 0 and b in [0, 1]");
    }
    Bm25Index index;
    index.params_ = params;
    index.tokenizer_ = Tokenizer(2, lowercase);
    index.texts_.assign(texts.begin(), texts.end());
    index.doc_lengths_.reserve(texts.size());

    std::uint64_t total_length = 0;
    for (std::size_t doc = 0; doc < texts.size(); ++doc) {
        const auto terms = index.tokenizer_.split(texts[doc]);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
        total_length += terms.size();
        std::map<std::string, std::uint32_t> counts;
        for (const auto& t : terms) ++counts[t];
        // documents are visited in id order, so posting lists come out sorted
        for (const auto& [term, tf] : counts) {
            index.postings_[term].push_back({static_cast<std::uint32_t>(doc), tf});
        }
    }
    index.avg_doc_length_ =
        texts.empty() ? 0.0 : static_cast<double>(total_length) / static_cast<double>(texts.size());
    return index;
}

std::vector<std::string> Bm25Index::query_terms(std::string_view query) const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : tokenizer_.split(query)) {
        if (seen.insert(t).second) out.push_back(std::move(t));
    }
    return out;
}

double Bm25Index::idf(std::string_view term) const {
    const auto it = postings_.find(std::string(term));
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(doc_count());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

RetrievalResult Bm25Index::search(std::string_view query, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("bm25 search: k must be >= 1");
    RetrievalResult result;
    result.k = k;
    if (doc_count() == 0) return result;

    std::unordered_map<std::uint32_t, double> scores;
    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& term : query_terms(query)) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double term_idf = idf(term);
        for (const Posting& p : it->second) {
            const double tf = p.tf;
            const double len_ratio =
                avg_doc_length_ > 0.0 ? doc_lengths_[p.doc] / avg_doc_length_ : 0.0;
            scores[p.doc] += term_idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio));
        }
    }

    std::vector<std::pair<double, std::uint32_t>> ranked;
    ranked.reserve(scores.size());
    for (const auto& [doc, score] : scores) ranked.emplace_back(score, doc);
    auto before = [](const auto& x, const auto& y) {
        return ranks_before(x.first, x.second, y.first, y.second);
    };
    const std::size_t keep = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                      ranked.end(), before);
    ranked.resize(keep);
    result.entries.reserve(keep);
    for (const auto& [score, doc] : ranked) result.entries.push_back({doc, texts_[doc], score});
    return result;
}

std::vector<std::uint8_t> Bm25Index::serialize() const {
    io::ByteWriter w;
    w.put_magic(kBm25Magic);
    w.put_u32(kBm25Version);
    w.put_f64(params_.k1);
    w.put_f64(params_.b);
    w.put_u32(tokenizer_.lowercase() ? 1u : 0u);
    w.put_u64(doc_count());
    for (const auto len : doc_lengths_) w.put_u32(len);
    std::uint64_t offset = 0;
    w.put_u64(offset);
    for (const auto& t : texts_) {
        offset += t.size();
        w.put_u64(offset);
    }
    for (const auto& t : texts_) w.put_bytes(t);
    w.put_u64(postings_.size());
    for (const auto& [term, list] : postings_) {
        w.put_u32(static_cast<std::uint32_t>(term.size()));
        w.put_bytes(term);
        w.put_u64(list.size());
        for (const auto& p : list) {
            w.put_u32(p.doc);
            w.put_u32(p.tf);
        }
    }
    return std::move(w).finish();
}

Bm25Index Bm25Index::deserialize(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes), kBm25Magic, kBm25Version, "bm25 index");
    Bm25Index index;
    index.params_.k1 = r.get_f64();
    index.params_.b = r.get_f64();
    const std::uint32_t flags = r.get_u32();
    if (flags > 1) throw FormatError(FormatError::Kind::Corrupt, "bm25 index: unknown flag bits");
    index.tokenizer_ = Tokenizer(2, flags == 1);
    const std::uint64_t n = r.get_u64();
    if (n > r.remaining() / (sizeof(std::uint32_t) + sizeof(std::uint64_t))) {
        throw FormatError(FormatError::Kind::Truncated, "bm25 index: truncated file");
    }
    index.doc_lengths_.resize(n);
    std::uint64_t total_length = 0;
    for (auto& len : index.doc_lengths_) {
        len = r.get_u32();
        total_length += len;
    }
    std::vector<std::uint64_t> offsets(n + 1);
    for (auto& o : offsets) o = r.get_u64();
    if (offsets.front() != 0 || !std::is_sorted(offsets.begin(), offsets.end())) {
        throw FormatError(FormatError::Kind::Corrupt, "bm25 index: text offsets not monotone");
    }
    r.need(offsets.back());
    for (std::size_t i = 0; i < n; ++i) index.texts_.push_back(r.get_bytes(offsets[i + 1] - offsets[i]));
    index.avg_doc_length_ = n == 0 ? 0.0 : static_cast<double>(total_length) / static_cast<double>(n);

    const std::uint64_t terms = r.get_u64();
    for (std::uint64_t t = 0; t < terms; ++t) {
        const std::uint32_t len = r.get_u32();
        std::string term = r.get_bytes(len);
        const std::uint64_t count = r.get_u64();
        r.need(count * 2 * sizeof(std::uint32_t));
        std::vector<Posting> list(count);
        for (auto& p : list) {
            p.doc = r.get_u32();
            p.tf = r.get_u32();
            if (p.doc >= n) throw FormatError(FormatError::Kind::Corrupt, "bm25 index: posting out of range");
        }
        index.postings_.emplace(std::move(term), std::move(list));
    }
    r.finish();
    return index;
}

void Bm25Index::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    return deserialize(io::read_file(path));
}

}  // namespace dsim
