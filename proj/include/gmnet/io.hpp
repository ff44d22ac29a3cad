#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gmnet/errors.hpp"

namespace gmnet {

// Little-endian binary IO for the GMNF/GMCK file formats. Byte order is
// written out explicitly so the formats are identical on any host.

class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path)
        : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { put_uint(v, 2); }
    void u32(std::uint32_t v) { put_uint(v, 4); }
    void u64(std::uint64_t v) { put_uint(v, 8); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    void close() {
        out_.close();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    void put_uint(std::uint64_t v, int n) {
        unsigned char b[8];
        for (int i = 0; i < n; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        bytes(b, static_cast<std::size_t>(n));
    }

    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path)
        : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    std::size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(path_ + ": truncated at offset " + std::to_string(offset_));
        }
        offset_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get_uint(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get_uint(4)); }
    std::uint64_t u64() { return get_uint(8); }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }

    void expect_magic(const char* magic) {
        std::string m = str(std::strlen(magic));
        if (m != magic) {
            throw FormatError(path_ + ": bad magic at offset 0, expected \"" +
                              std::string(magic) + "\"");
        }
    }

private:
    std::uint64_t get_uint(int n) {
        unsigned char b[8];
        bytes(b, static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

} // namespace gmnet
