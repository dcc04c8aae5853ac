#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "btfstream/errors.hpp"

namespace btfstream {

// Little-endian buffer serialization. The build targets little-endian
// hosts; memcpy of the native representation is the wire encoding.

class ByteWriter {
public:
    std::vector<uint8_t> buf;

    void u8(uint8_t v) { buf.push_back(v); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }

    void raw(const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }

    void bytes(const std::vector<uint8_t>& v) { raw(v.data(), v.size()); }

    // Patch a u64 written earlier (offset fixups in the chunk table).
    void patch_u64(size_t pos, uint64_t v) { std::memcpy(buf.data() + pos, &v, 8); }

    size_t size() const { return buf.size(); }
};

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<uint8_t>& v) : data_(v.data()), size_(v.size()) {}

    uint8_t u8() { return take<uint8_t>(); }
    uint16_t u16() { return take<uint16_t>(); }
    uint32_t u32() { return take<uint32_t>(); }
    uint64_t u64() { return take<uint64_t>(); }
    float f32() { return take<float>(); }

    void raw(void* out, size_t n) {
        need(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    std::vector<uint8_t> bytes(size_t n) {
        need(n);
        std::vector<uint8_t> out(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return out;
    }

    void skip(size_t n) { need(n); pos_ += n; }
    size_t remaining() const { return size_ - pos_; }
    size_t position() const { return pos_; }
    bool done() const { return pos_ == size_; }

private:
    template <typename T>
    T take() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    void need(size_t n) {
        if (size_ - pos_ < n)
            throw FormatError("unexpected end of data");
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& data);

} // namespace btfstream
