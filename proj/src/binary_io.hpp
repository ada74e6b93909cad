#pragma once

// Little-endian primitive readers/writers shared by the corpus and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cosettle/error.hpp"

namespace cosettle::detail {

class ByteWriter {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        buffer_.insert(buffer_.end(), p, p + n);
    }

    template <typename UInt>
    void unsigned_le(UInt v) {
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            buffer_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
        }
    }

    void u8(std::uint8_t v) { buffer_.push_back(v); }
    void u32(std::uint32_t v) { unsigned_le(v); }
    void u64(std::uint64_t v) { unsigned_le(v); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(buffer_.data()),
                  static_cast<std::streamsize>(buffer_.size()));
        if (!out) throw Error("write failed for " + path.string());
    }

private:
    std::vector<unsigned char> buffer_;
};

class ByteReader {
public:
    explicit ByteReader(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open " + path.string(), 0);
        buffer_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::uint64_t offset() const noexcept { return offset_; }
    std::uint64_t remaining() const noexcept { return buffer_.size() - offset_; }

    void expect_magic(const char (&magic)[4]) {
        need(4, "magic");
        if (std::memcmp(buffer_.data(), magic, 4) != 0) {
            throw FormatError("bad magic, expected \"" + std::string(magic, 4) + "\"", 0);
        }
        offset_ += 4;
    }

    template <typename UInt>
    UInt unsigned_le(const char* what) {
        need(sizeof(UInt), what);
        UInt v = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            v |= static_cast<UInt>(static_cast<unsigned char>(buffer_[offset_ + i])) << (8 * i);
        }
        offset_ += sizeof(UInt);
        return v;
    }

    std::uint8_t u8(const char* what) { return unsigned_le<std::uint8_t>(what); }
    std::uint32_t u32(const char* what) { return unsigned_le<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return unsigned_le<std::uint64_t>(what); }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    void need(std::uint64_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(std::string("truncated payload while reading ") + what, offset_);
        }
    }

    void expect_end() const {
        if (remaining() != 0) {
            throw FormatError(std::to_string(remaining()) + " trailing bytes", offset_);
        }
    }

private:
    std::vector<char> buffer_;
    std::uint64_t offset_ = 0;
};

}  // namespace cosettle::detail
