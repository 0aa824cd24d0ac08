#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsim/encoder.hpp"
#include "dsim/vector_index.hpp"

namespace dsim {

/// Reads the next corpus text (one per line, blank lines skipped, trailing CR
/// dropped). Returns false at end of stream.
bool next_corpus_line(std::istream& in, std::string& line);

/// All corpus texts of a file, in the order next_corpus_line yields them.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

using CorpusSink = std::function<void(std::span<const IndexItem>)>;

/// Streams texts through the sentence encoder in blocks of block_size and
/// hands each encoded block to sink. Ids are assigned sequentially from
/// first_id in input order. Memory use is bounded by block_size.
std::size_t encode_corpus(const EncoderModel& model, std::istream& texts, const CorpusSink& sink,
                          std::size_t block_size = 1024, std::size_t threads = 1,
                          std::uint64_t first_id = 0);

/// Streaming container for encoded corpora ("DSVC"): header with dim, then
/// tagged records (u8 1, u64 id, u32 length, text, dim x f32), then u8 0,
/// u64 record count and a CRC32 of all preceding bytes.
class CorpusVectorWriter {
public:
    CorpusVectorWriter(const std::filesystem::path& path, std::uint32_t dim);
    ~CorpusVectorWriter();
    CorpusVectorWriter(const CorpusVectorWriter&) = delete;
    CorpusVectorWriter& operator=(const CorpusVectorWriter&) = delete;

    void write(std::span<const IndexItem> items);
    /// Writes the trailer. Called by the destructor if omitted, but errors are then lost.
    void close();

    std::uint64_t count() const noexcept { return count_; }

private:
    void put(const void* data, std::size_t n);

    std::ofstream out_;
    std::uint32_t dim_;
    std::uint64_t count_ = 0;
    std::uint32_t crc_ = 0;
    bool closed_ = false;
};

class CorpusVectorReader {
public:
    explicit CorpusVectorReader(const std::filesystem::path& path);

    std::uint32_t dim() const noexcept { return dim_; }

    /// Next record, or nullopt after the trailer has been verified.
    std::optional<IndexItem> next();

private:
    void get(void* data, std::size_t n);

    std::ifstream in_;
    std::uint32_t dim_ = 0;
    std::uint64_t seen_ = 0;
    std::uint32_t crc_ = 0;
    bool done_ = false;
};

/// Reads a whole DSVC file into an index.
VectorIndex build_index_from_vectors(const std::filesystem::path& path);

}  // namespace dsim
