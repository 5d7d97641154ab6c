#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "mazefl/errors.hpp"

// Little-endian primitives shared by the dataset, checkpoint, and wire
// formats. All multi-byte fields in those formats are little-endian.

namespace mazefl::detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) {
    out.push_back(v);
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    put_u32le(out, static_cast<std::uint32_t>(v));
    put_u32le(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32le(std::vector<std::uint8_t>& out, float v) {
    put_u32le(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t load_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) |
           static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 |
           static_cast<std::uint32_t>(p[3]) << 24;
}

inline float load_f32le(const std::uint8_t* p) {
    return std::bit_cast<float>(load_u32le(p));
}

// Bounds-checked forward reader over a byte buffer. Truncation or any
// other structural problem surfaces as FormatError; callers parsing
// network payloads translate that to ProtocolError.
class ByteCursor {
public:
    explicit ByteCursor(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }

    std::uint32_t u32le() {
        need(4);
        std::uint32_t v = load_u32le(data_.data() + pos_);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64le() {
        std::uint64_t lo = u32le();
        std::uint64_t hi = u32le();
        return lo | hi << 32;
    }

    float f32le() {
        need(4);
        float v = load_f32le(data_.data() + pos_);
        pos_ += 4;
        return v;
    }

    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    void expect_magic(const char (&magic)[5]) {
        auto got = bytes(4);
        if (std::memcmp(got.data(), magic, 4) != 0) {
            throw FormatError(std::string("bad magic, expected ") + magic);
        }
    }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw FormatError("truncated data");
        }
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace mazefl::detail
