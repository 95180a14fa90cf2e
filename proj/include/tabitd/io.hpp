#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tabitd/errors.hpp"
#include "tabitd/tensor.hpp"

namespace tabitd::io {

static_assert(sizeof(double) == 8, "containers assume IEEE-754 binary64");

// All container values are little-endian on disk.

template <typename T>
inline void write_raw(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char* b = reinterpret_cast<unsigned char*>(&value);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
    if (!os) throw IoError("write failed");
}

template <typename T>
inline T read_raw(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError("unexpected end of stream");
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char* b = reinterpret_cast<unsigned char*>(&value);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return value;
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_raw(os, v); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_raw(os, v); }
inline void write_f64(std::ostream& os, double v) { write_raw(os, v); }

inline std::uint8_t read_u8(std::istream& is) { return read_raw<std::uint8_t>(is); }
inline std::uint32_t read_u32(std::istream& is) { return read_raw<std::uint32_t>(is); }
inline std::uint64_t read_u64(std::istream& is) { return read_raw<std::uint64_t>(is); }
inline double read_f64(std::istream& is) { return read_raw<double>(is); }

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!os) throw IoError("write failed");
}

inline std::string read_string(std::istream& is, std::uint64_t max_len = (1ULL << 32)) {
    std::uint64_t n = read_u64(is);
    if (n > max_len) throw IoError("string length " + std::to_string(n) + " exceeds limit");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw IoError("unexpected end of stream");
    return s;
}

inline void write_f64_span(std::ostream& os, std::span<const double> v) {
    write_u64(os, v.size());
    for (double x : v) write_f64(os, x);
}

inline std::vector<double> read_f64_vec(std::istream& is) {
    std::uint64_t n = read_u64(is);
    std::vector<double> v(n);
    for (auto& x : v) x = read_f64(is);
    return v;
}

inline void write_tensor(std::ostream& os, const Tensor2& t) {
    write_u64(os, t.rows);
    write_u64(os, t.cols);
    for (double x : t.data) write_f64(os, x);
}

inline Tensor2 read_tensor(std::istream& is) {
    std::uint64_t r = read_u64(is);
    std::uint64_t c = read_u64(is);
    Tensor2 t(r, c);
    for (auto& x : t.data) x = read_f64(is);
    return t;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
    os.write(magic, 4);
    if (!os) throw IoError("write failed");
}

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
    char buf[4];
    is.read(buf, 4);
    if (!is || std::memcmp(buf, magic, 4) != 0)
        throw IoError(std::string("bad magic bytes: not a ") + what + " file");
}

/// FNV-1a over raw bytes; fingerprints are built from this.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    return fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, h);
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + p.string());
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + p.string());
    return is;
}

} // namespace tabitd::io
