#include "dsim/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace dsim::io {

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
    uLong crc = seed;
    const std::uint8_t* data = bytes.data();
    std::size_t left = bytes.size();
    // zlib takes uInt lengths
    while (left > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
        crc = ::crc32(crc, data, chunk);
        data += chunk;
        left -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

template <typename T>
void append_raw(std::vector<std::uint8_t>& out, const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

void ByteWriter::put_magic(const Magic& magic) {
    buffer_.insert(buffer_.end(), magic.begin(), magic.end());
}
void ByteWriter::put_u8(std::uint8_t value) { buffer_.push_back(value); }
void ByteWriter::put_u32(std::uint32_t value) { append_raw(buffer_, value); }
void ByteWriter::put_u64(std::uint64_t value) { append_raw(buffer_, value); }
void ByteWriter::put_f32(float value) { append_raw(buffer_, value); }
void ByteWriter::put_f64(double value) { append_raw(buffer_, value); }

void ByteWriter::put_f32s(std::span<const float> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    buffer_.insert(buffer_.end(), p, p + values.size_bytes());
}

void ByteWriter::put_bytes(std::string_view bytes) {
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> ByteWriter::finish() && {
    const std::uint32_t crc = crc32(buffer_);
    append_raw(buffer_, crc);
    return std::move(buffer_);
}

ByteReader::ByteReader(std::vector<std::uint8_t> bytes, const Magic& magic,
                       std::uint32_t version, std::string_view what)
    : bytes_(std::move(bytes)), what_(what) {
    if (bytes_.size() < magic.size()) {
        throw FormatError(FormatError::Kind::Truncated, what_ + ": truncated file (no header)");
    }
    if (std::memcmp(bytes_.data(), magic.data(), magic.size()) != 0) {
        throw FormatError(FormatError::Kind::BadMagic, what_ + ": bad magic");
    }
    pos_ = magic.size();
    const std::uint32_t found = get_u32();
    if (found != version) {
        throw FormatError(FormatError::Kind::VersionMismatch,
                          what_ + ": version mismatch (file " + std::to_string(found) +
                              ", expected " + std::to_string(version) + ")");
    }
}

void ByteReader::need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
        throw FormatError(FormatError::Kind::Truncated, what_ + ": truncated file");
    }
}

std::uint8_t ByteReader::get_u8() {
    need(1);
    return bytes_[pos_++];
}

#define DSIM_READ_SCALAR(T)                                \
    need(sizeof(T));                                       \
    T value;                                               \
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));  \
    pos_ += sizeof(T);                                     \
    return value

std::uint32_t ByteReader::get_u32() { DSIM_READ_SCALAR(std::uint32_t); }
std::uint64_t ByteReader::get_u64() { DSIM_READ_SCALAR(std::uint64_t); }
float ByteReader::get_f32() { DSIM_READ_SCALAR(float); }
double ByteReader::get_f64() { DSIM_READ_SCALAR(double); }

#undef DSIM_READ_SCALAR

void ByteReader::get_f32s(std::span<float> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
}

std::string ByteReader::get_bytes(std::size_t n) {
    need(n);
    std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return out;
}

void ByteReader::finish() const {
    const std::size_t left = bytes_.size() - pos_;
    if (left < sizeof(std::uint32_t)) {
        throw FormatError(FormatError::Kind::Truncated, what_ + ": truncated file (checksum)");
    }
    if (left > sizeof(std::uint32_t)) {
        throw FormatError(FormatError::Kind::Corrupt, what_ + ": trailing bytes after payload");
    }
    std::uint32_t stored;
    std::memcpy(&stored, bytes_.data() + pos_, sizeof stored);
    const auto computed = crc32(std::span<const std::uint8_t>(bytes_.data(), pos_));
    if (stored != computed) {
        throw FormatError(FormatError::Kind::ChecksumMismatch, what_ + ": checksum mismatch");
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(FormatError::Kind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
    }
}

}  // namespace dsim::io
