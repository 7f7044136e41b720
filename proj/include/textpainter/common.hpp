#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace textpainter {

// Library errors carry a short machine-parseable code plus a human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& msg) {
    throw Error(code, msg);
}

inline void check(bool cond, const std::string& code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

// Pixel-space rectangle, (x, y) top-left, half-open on the right/bottom.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const Rect&) const = default;
    bool contains(const Rect& inner) const {
        return inner.x >= x && inner.y >= y && inner.x + inner.w <= x + w &&
               inner.y + inner.h <= y + h;
    }
    bool intersects(const Rect& o) const {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

inline int round_up(int v, int align) { return (v + align - 1) / align * align; }

// Decodes UTF-8 into codepoints; invalid bytes map to U+FFFD.
std::u32string utf8_decode(const std::string& s);
std::string utf8_encode(const std::u32string& s);

}  // namespace textpainter
