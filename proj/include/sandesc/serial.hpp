#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sandesc/common.hpp"

namespace sandesc {

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path);

// One `key = value` per line; '#' starts a comment; blank lines allowed.
struct KvLine {
    std::string key, value;
    int line_no = 0;
};
std::vector<KvLine> parse_kv_text(const std::string& text);

std::string format_double(double v);  // shortest round-trip (%.17g)

std::vector<int> parse_int_list(const std::string& s, const std::string& what);
std::string join_int_list(const std::vector<int>& v);

namespace bin {

inline void write_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t read_u32(std::istream& in, const char* what) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    SD_CHECK(in.gcount() == 4, "truncated file while reading ", what);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

inline uint64_t read_u64(std::istream& in, const char* what) {
    uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    SD_CHECK(in.gcount() == 8, "truncated file while reading ", what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace bin

}  // namespace sandesc
