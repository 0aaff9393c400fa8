#pragma once

// FNV-1a 64-bit. Used for member digests in ensemble checkpoints and for
// the freeze/backbone-equality checks in tests.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace kcal {

inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    return fnv1a64(std::span<const unsigned char>(static_cast<const unsigned char*>(data), n));
}

inline std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace kcal
