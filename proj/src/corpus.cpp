#include "dsim/corpus.hpp"

#include <bit>
#include <cstring>

#include "dsim/binary_io.hpp"
#include "dsim/error.hpp"
#include "dsim/parallel.hpp"

namespace dsim {

namespace {

constexpr io::Magic kCorpusMagic{'D', 'S', 'V', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;

// Records are copied to and from the stream as raw little-endian integers.
static_assert(std::endian::native == std::endian::little);

std::uint32_t crc_update(std::uint32_t crc, const void* data, std::size_t n) {
    return io::crc32(std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(data), n), crc);
}

}  // namespace

bool next_corpus_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
}

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus " + path.string());
    std::vector<std::string> texts;
    std::string line;
    while (next_corpus_line(in, line)) texts.push_back(line);
    return texts;
}

std::size_t encode_corpus(const EncoderModel& model, std::istream& texts, const CorpusSink& sink,
                          std::size_t block_size, std::size_t threads, std::uint64_t first_id) {
    if (block_size == 0) throw std::invalid_argument("encode_corpus: block_size must be positive");
    std::vector<IndexItem> block;
    block.reserve(block_size);
    std::uint64_t next_id = first_id;
    std::size_t total = 0;

    auto flush = [&] {
        parallel_chunks(block.size(), threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const auto encoded = model.encode(block[i].text);
                block[i].vector.assign(encoded.vector.begin(), encoded.vector.end());
            }
        });
        sink(block);
        total += block.size();
        block.clear();
    };

    std::string line;
    while (next_corpus_line(texts, line)) {
        block.push_back({next_id++, line, {}});
        if (block.size() == block_size) flush();
    }
    if (!block.empty()) flush();
    return total;
}

CorpusVectorWriter::CorpusVectorWriter(const std::filesystem::path& path, std::uint32_t dim)
    : out_(path, std::ios::binary | std::ios::trunc), dim_(dim) {
    if (!out_) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    put(kCorpusMagic.data(), kCorpusMagic.size());
    put(&kCorpusVersion, sizeof kCorpusVersion);
    put(&dim_, sizeof dim_);
}

CorpusVectorWriter::~CorpusVectorWriter() {
    if (!closed_) {
        try {
            close();
        } catch (...) {
        }
    }
}

void CorpusVectorWriter::put(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    crc_ = crc_update(crc_, data, n);
}

void CorpusVectorWriter::write(std::span<const IndexItem> items) {
    for (const auto& item : items) {
        if (item.vector.size() != dim_) throw DimensionMismatch("corpus vector dimension mismatch");
        const std::uint8_t tag = 1;
        const auto len = static_cast<std::uint32_t>(item.text.size());
        put(&tag, 1);
        put(&item.id, sizeof item.id);
        put(&len, sizeof len);
        put(item.text.data(), item.text.size());
        put(item.vector.data(), item.vector.size() * sizeof(float));
        ++count_;
    }
    if (!out_) throw FormatError(FormatError::Kind::Io, "corpus vector write failed");
}

void CorpusVectorWriter::close() {
    if (closed_) return;
    closed_ = true;
    const std::uint8_t tag = 0;
    put(&tag, 1);
    put(&count_, sizeof count_);
    const std::uint32_t crc = crc_;
    out_.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    out_.close();
    if (!out_) throw FormatError(FormatError::Kind::Io, "corpus vector write failed");
}

CorpusVectorReader::CorpusVectorReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary) {
    if (!in_) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    io::Magic magic{};
    get(magic.data(), magic.size());
    if (magic != kCorpusMagic) throw FormatError(FormatError::Kind::BadMagic, "corpus vectors: bad magic");
    std::uint32_t version = 0;
    get(&version, sizeof version);
    if (version != kCorpusVersion) {
        throw FormatError(FormatError::Kind::VersionMismatch, "corpus vectors: version mismatch");
    }
    get(&dim_, sizeof dim_);
    if (dim_ == 0) throw FormatError(FormatError::Kind::Corrupt, "corpus vectors: zero dimension");
}

void CorpusVectorReader::get(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
        throw FormatError(FormatError::Kind::Truncated, "corpus vectors: truncated file");
    }
    crc_ = crc_update(crc_, data, n);
}

std::optional<IndexItem> CorpusVectorReader::next() {
    if (done_) return std::nullopt;
    std::uint8_t tag = 0;
    get(&tag, 1);
    if (tag == 0) {
        std::uint64_t count = 0;
        get(&count, sizeof count);
        const std::uint32_t expected = crc_;
        std::uint32_t stored = 0;
        in_.read(reinterpret_cast<char*>(&stored), sizeof stored);
        if (in_.gcount() != sizeof stored) {
            throw FormatError(FormatError::Kind::Truncated, "corpus vectors: truncated file");
        }
        if (count != seen_) throw FormatError(FormatError::Kind::Corrupt, "corpus vectors: record count mismatch");
        if (stored != expected) {
            throw FormatError(FormatError::Kind::ChecksumMismatch, "corpus vectors: checksum mismatch");
        }
        done_ = true;
        return std::nullopt;
    }
    if (tag != 1) throw FormatError(FormatError::Kind::Corrupt, "corpus vectors: bad record tag");
    IndexItem item;
    std::uint32_t len = 0;
    get(&item.id, sizeof item.id);
    get(&len, sizeof len);
    if (len > (1u << 26)) throw FormatError(FormatError::Kind::Corrupt, "corpus vectors: implausible text length");
    item.text.resize(len);
    get(item.text.data(), len);
    item.vector.resize(dim_);
    get(item.vector.data(), dim_ * sizeof(float));
    ++seen_;
    return item;
}

VectorIndex build_index_from_vectors(const std::filesystem::path& path) {
    CorpusVectorReader reader(path);
    std::vector<IndexItem> items;
    while (auto item = reader.next()) items.push_back(std::move(*item));
    return VectorIndex::build(reader.dim(), items);
}

}  // namespace dsim
