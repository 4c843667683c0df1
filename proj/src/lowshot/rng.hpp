#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace lowshot {

// Seeded RNG with an explicit uniform->double mapping and Marsaglia polar
// normals, so streams do not depend on the standard library's distribution
// implementations. Same seed, same stream, everywhere we build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over arbitrary bytes; stable across platforms. Used to derive
// per-cell seeds from a root seed plus a row key.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((base >> (8 * i)) & 0xff);
    std::uint64_t h = fnv1a64(std::string_view(buf, 8));
    return fnv1a64(tag, h);
}

}  // namespace lowshot
