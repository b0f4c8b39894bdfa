#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace llmmob {

// 64-bit FNV-1a. Stable across platforms and runs; used for prompt hashes
// and cache keys, not for anything adversarial.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

// Digest of several fields, separated so that ("ab","c") != ("a","bc").
inline std::string hex_digest(std::initializer_list<std::string_view> parts) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : parts) {
        h = fnv1a64(p, h);
        h = fnv1a64(std::string_view("\x1f", 1), h);
    }
    return to_hex(h);
}

}  // namespace llmmob
