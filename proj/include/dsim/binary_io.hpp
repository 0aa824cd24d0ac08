#pragma once

// Little-endian container helpers shared by the checkpoint, vector index and
// BM25 file formats. Every container ends with a CRC32 of all preceding bytes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsim/error.hpp"

namespace dsim::io {

using Magic = std::array<char, 4>;

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed = 0);

class ByteWriter {
public:
    void put_magic(const Magic& magic);
    void put_u8(std::uint8_t value);
    void put_u32(std::uint32_t value);
    void put_u64(std::uint64_t value);
    void put_f32(float value);
    void put_f64(double value);
    void put_f32s(std::span<const float> values);
    void put_bytes(std::string_view bytes);

    /// Appends the CRC32 trailer and returns the finished buffer.
    std::vector<std::uint8_t> finish() &&;

    std::size_t size() const noexcept { return buffer_.size(); }

private:
    std::vector<std::uint8_t> buffer_;
};

/// Reader over an in-memory container. Short reads raise FormatError::Truncated.
class ByteReader {
public:
    /// Checks magic then version and positions the cursor just past the
    /// version field. The CRC trailer is verified by finish().
    ByteReader(std::vector<std::uint8_t> bytes, const Magic& magic, std::uint32_t version,
               std::string_view what);

    std::uint8_t get_u8();
    std::uint32_t get_u32();
    std::uint64_t get_u64();
    float get_f32();
    double get_f64();
    void get_f32s(std::span<float> out);
    std::string get_bytes(std::size_t n);

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    /// Requires exactly the 4-byte CRC trailer to remain and verifies it.
    void finish() const;

    /// Throws Truncated unless at least n payload bytes remain.
    void need(std::size_t n) const;

private:

    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dsim::io
