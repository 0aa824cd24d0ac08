#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dsim/retrieval.hpp"

namespace dsim {

struct IndexItem {
    std::uint64_t id = 0;
    std::string text;
    std::vector<float> vector;
};

/// Exact cosine top-k over L2-normalized sentence vectors.
///
/// File layout (little endian): "DSIM", u32 version, u32 dim, u64 count,
/// count x dim f32 vectors, count u64 ids, (count + 1) u64 text offsets into
/// the UTF-8 text blob, the blob, CRC32 of all preceding bytes.
class VectorIndex {
public:
    static constexpr std::size_t kBlockRows = 4096;

    VectorIndex() = default;

    /// Normalizes rows at insert. Throws DimensionMismatch, or Error on a
    /// duplicate id or zero vector.
    static VectorIndex build(std::uint32_t dim, std::span<const IndexItem> items);

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }

    std::uint64_t id(std::size_t row) const { return ids_.at(row); }
    std::string_view text(std::size_t row) const { return texts_.at(row); }
    std::span<const float> vector(std::size_t row) const;
    std::optional<std::size_t> find(std::uint64_t id) const;
    bool contains(std::uint64_t id) const { return find(id).has_value(); }

    /// Exact top-k by cosine; |entries| = min(k, size()). Block-parallel with
    /// `threads` > 1; the result does not depend on the thread count.
    RetrievalResult search(std::span<const double> query, std::size_t k,
                           std::size_t threads = 1) const;

    std::vector<std::uint8_t> serialize() const;
    static VectorIndex deserialize(std::vector<std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

    friend bool operator==(const VectorIndex& a, const VectorIndex& b) {
        return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.vectors_ == b.vectors_ &&
               a.texts_ == b.texts_;
    }

private:
    void rebuild_lookup();

    std::uint32_t dim_ = 0;
    std::vector<std::uint64_t> ids_;
    std::vector<float> vectors_;
    std::vector<std::string> texts_;
    std::unordered_map<std::uint64_t, std::size_t> by_id_;
};

}  // namespace dsim
