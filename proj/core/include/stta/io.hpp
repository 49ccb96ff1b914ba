#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "stta/error.hpp"

namespace stta {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are not supported");

/// Accumulates a little-endian binary image in memory.
class BinaryWriter {
public:
    void magic(std::string_view m) { buf_.append(m.data(), m.size()); }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }

    template <typename It>
    void f64_range(It begin, It end) {
        for (It it = begin; it != end; ++it) f64(static_cast<double>(*it));
    }

    const std::string& bytes() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

/// Bounds-checked little-endian reader over an in-memory buffer.
class BinaryReader {
public:
    explicit BinaryReader(std::string data) : data_(std::move(data)) {}

    void expect_magic(std::string_view m) {
        if (data_.size() < pos_ + m.size() || std::string_view(data_).substr(pos_, m.size()) != m)
            throw IoError("bad magic, expected '" + std::string(m) + "'");
        pos_ += m.size();
    }
    std::uint8_t u8() { return read<std::uint8_t>(); }
    std::uint16_t u16() { return read<std::uint16_t>(); }
    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint64_t u64() { return read<std::uint64_t>(); }
    double f64() { return read<double>(); }
    bool at_end() const { return pos_ == data_.size(); }

private:
    template <typename T>
    T read() {
        if (pos_ + sizeof(T) > data_.size()) throw IoError("truncated file");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

/// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace stta
