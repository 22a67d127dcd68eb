#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace acc::binio {

// Minimal native-endian binary record IO shared by the dataset container and
// the parameter checkpoints. Doubles are written bit-for-bit, which is what
// makes round trips exact.

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f64_span(std::ostream& os, const double* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void write_u64_span(std::ostream& os, const std::uint64_t* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p),
             static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("binio: truncated stream (u64)");
    return v;
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("binio: truncated stream (u32)");
    return v;
}

inline double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("binio: truncated stream (f64)");
    return v;
}

inline void read_f64_span(std::istream& is, double* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("binio: truncated stream (f64 span)");
}

inline void read_u64_span(std::istream& is, std::uint64_t* p, std::size_t n) {
    is.read(reinterpret_cast<char*>(p),
            static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
    if (!is) throw std::runtime_error("binio: truncated stream (u64 span)");
}

inline void write_magic(std::ostream& os, const char magic[8]) {
    os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char magic[8], const std::string& what) {
    char buf[8] = {};
    is.read(buf, 8);
    if (!is || std::memcmp(buf, magic, 8) != 0) {
        throw std::runtime_error(what + ": bad magic");
    }
}

}  // namespace acc::binio
