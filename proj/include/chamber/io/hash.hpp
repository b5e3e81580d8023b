#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

namespace chamber {

/// FNV-1a 64-bit. Used for dataset checksums, config hashes and derived
/// RNG stream ids. Not cryptographic; stable across platforms.
class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }

    uint64_t value() const { return h_; }

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    uint64_t h_ = 0xcbf29ce484222325ull;
};

inline uint64_t fnv1a(const std::string& s) {
    Fnv1a h;
    h.update(s);
    return h.value();
}

} // namespace chamber
