#include "dsim/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "dsim/binary_io.hpp"
#include "dsim/error.hpp"
#include "dsim/parallel.hpp"

namespace dsim {

namespace {

constexpr io::Magic kIndexMagic{'D', 'S', 'I', 'M'};
constexpr std::uint32_t kIndexVersion = 1;

struct Candidate {
    double score;
    std::uint64_t id;
    std::size_t row;
};

// Heap ordered so that top() is the worst kept candidate.
struct WorseOnTop {
    bool operator()(const Candidate& a, const Candidate& b) const {
        return ranks_before(a.score, a.id, b.score, b.id);
    }
};

using TopK = std::priority_queue<Candidate, std::vector<Candidate>, WorseOnTop>;

void offer(TopK& heap, std::size_t k, const Candidate& c) {
    if (heap.size() < k) {
        heap.push(c);
    } else if (ranks_before(c.score, c.id, heap.top().score, heap.top().id)) {
        heap.pop();
        heap.push(c);
    }
}

// Four partial sums, combined in a fixed order.
double dot(const float* v, const double* q, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        a0 += static_cast<double>(v[j]) * q[j];
        a1 += static_cast<double>(v[j + 1]) * q[j + 1];
        a2 += static_cast<double>(v[j + 2]) * q[j + 2];
        a3 += static_cast<double>(v[j + 3]) * q[j + 3];
    }
    for (; j < n; ++j) a0 += static_cast<double>(v[j]) * q[j];
    return (a0 + a1) + (a2 + a3);
}

}  // namespace

VectorIndex VectorIndex::build(std::uint32_t dim, std::span<const IndexItem> items) {
    if (dim == 0) throw std::invalid_argument("index dimension must be positive");
    VectorIndex index;
    index.dim_ = dim;
    index.ids_.reserve(items.size());
    index.texts_.reserve(items.size());
    index.vectors_.reserve(items.size() * dim);
    for (const auto& item : items) {
        if (item.vector.size() != dim) {
            throw DimensionMismatch("index item " + std::to_string(item.id) + " has dimension " +
                                    std::to_string(item.vector.size()) + ", expected " +
                                    std::to_string(dim));
        }
        if (index.by_id_.contains(item.id)) {
            throw Error("duplicate index id " + std::to_string(item.id));
        }
        double sq = 0.0;
        for (const float x : item.vector) sq += static_cast<double>(x) * x;
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw Error("index item " + std::to_string(item.id) + " has a zero or non-finite vector");
        }
        for (const float x : item.vector) index.vectors_.push_back(static_cast<float>(x / norm));
        index.by_id_.emplace(item.id, index.ids_.size());
        index.ids_.push_back(item.id);
        index.texts_.push_back(item.text);
    }
    return index;
}

std::span<const float> VectorIndex::vector(std::size_t row) const {
    if (row >= size()) throw std::out_of_range("index row out of range");
    return std::span<const float>(vectors_).subspan(row * dim_, dim_);
}

std::optional<std::size_t> VectorIndex::find(std::uint64_t id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

void VectorIndex::rebuild_lookup() {
    by_id_.clear();
    by_id_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!by_id_.emplace(ids_[i], i).second) {
            throw FormatError(FormatError::Kind::Corrupt, "index: duplicate id in file");
        }
    }
}

RetrievalResult VectorIndex::search(std::span<const double> query, std::size_t k,
                                    std::size_t threads) const {
    if (k == 0) throw std::invalid_argument("search: k must be >= 1");
    if (query.size() != dim_) {
        throw DimensionMismatch("search: query has dimension " + std::to_string(query.size()) +
                                ", index has " + std::to_string(dim_));
    }
    double sq = 0.0;
    for (const double x : query) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw DegenerateVector("search: zero or non-finite query vector");
    }
    std::vector<double> q(query.begin(), query.end());
    for (double& x : q) x /= norm;

    const std::size_t keep = std::min(k, size());
    const std::size_t blocks = (size() + kBlockRows - 1) / kBlockRows;
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, blocks));
    const std::size_t blocks_per_worker = std::max<std::size_t>(1, (blocks + workers - 1) / workers);
    std::vector<TopK> partial(workers);

    parallel_chunks(blocks, workers, [&](std::size_t block_begin, std::size_t block_end) {
        TopK& heap = partial[block_begin / blocks_per_worker];
        TopK local;
        for (std::size_t blk = block_begin; blk < block_end; ++blk) {
            const std::size_t row_end = std::min(size(), (blk + 1) * kBlockRows);
            for (std::size_t row = blk * kBlockRows; row < row_end; ++row) {
                const double acc = dot(vectors_.data() + row * dim_, q.data(), dim_);
                offer(local, keep, {acc, ids_[row], row});
            }
        }
        heap = std::move(local);
    });

    std::vector<Candidate> merged;
    for (auto& heap : partial) {
        while (!heap.empty()) {
            merged.push_back(heap.top());
            heap.pop();
        }
    }
    std::sort(merged.begin(), merged.end(), [](const Candidate& a, const Candidate& b) {
        return ranks_before(a.score, a.id, b.score, b.id);
    });
    if (merged.size() > keep) merged.resize(keep);

    RetrievalResult result;
    result.k = k;
    result.entries.reserve(merged.size());
    for (const auto& c : merged) result.entries.push_back({c.id, texts_[c.row], c.score});
    return result;
}

std::vector<std::uint8_t> VectorIndex::serialize() const {
    io::ByteWriter w;
    w.put_magic(kIndexMagic);
    w.put_u32(kIndexVersion);
    w.put_u32(dim_);
    w.put_u64(ids_.size());
    w.put_f32s(vectors_);
    for (const auto id : ids_) w.put_u64(id);
    std::uint64_t offset = 0;
    w.put_u64(offset);
    for (const auto& t : texts_) {
        offset += t.size();
        w.put_u64(offset);
    }
    for (const auto& t : texts_) w.put_bytes(t);
    return std::move(w).finish();
}

VectorIndex VectorIndex::deserialize(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes), kIndexMagic, kIndexVersion, "index");
    VectorIndex index;
    index.dim_ = r.get_u32();
    const std::uint64_t count = r.get_u64();
    if (index.dim_ == 0) throw FormatError(FormatError::Kind::Corrupt, "index: zero dimension");
    // vectors + ids + offsets must fit before anything is allocated
    const std::uint64_t row_bytes = std::uint64_t{index.dim_} * sizeof(float) + 2 * sizeof(std::uint64_t);
    if (count > r.remaining() / row_bytes) {
        throw FormatError(FormatError::Kind::Truncated, "index: truncated file");
    }
    index.vectors_.resize(count * index.dim_);
    r.get_f32s(index.vectors_);
    index.ids_.resize(count);
    for (auto& id : index.ids_) id = r.get_u64();
    std::vector<std::uint64_t> offsets(count + 1);
    for (auto& o : offsets) o = r.get_u64();
    if (offsets.front() != 0 || !std::is_sorted(offsets.begin(), offsets.end())) {
        throw FormatError(FormatError::Kind::Corrupt, "index: text offsets not monotone");
    }
    r.need(offsets.back());
    index.texts_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        index.texts_.push_back(r.get_bytes(offsets[i + 1] - offsets[i]));
    }
    r.finish();
    index.rebuild_lookup();
    return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    io::write_file(path, serialize());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    return deserialize(io::read_file(path));
}

}  // namespace dsim
