#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "sandesc/common.hpp"

namespace sandesc {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-reproducible across platforms and serializable into checkpoints
// (std:: distributions do not guarantee either).
class Rng {
public:
    Rng() : Rng(0x9E3779B97F4A7C15ull) {}

    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    // Derive an independent stream, e.g. Rng(seed).split(salt).
    Rng split(uint64_t salt) const {
        uint64_t x = s_[0] ^ (salt * 0xBF58476D1CE4E5B9ull);
        Rng r;
        for (auto& w : r.s_) w = splitmix64(x);
        return r;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n)
    int uniform_int(int n) {
        SD_CHECK(n > 0, "uniform_int: n must be positive, got ", n);
        return int(next_u64() % uint64_t(n));
    }

    // Box-Muller, no cached spare so state round-trips are exact.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    std::array<uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

    std::string state_hex() const {
        char buf[4 * 17];
        char* p = buf;
        for (int i = 0; i < 4; ++i)
            p += snprintf(p, 18, i ? ":%016llx" : "%016llx", (unsigned long long)s_[i]);
        return std::string(buf);
    }

    static Rng from_state_hex(const std::string& hex) {
        Rng r;
        std::array<uint64_t, 4> s{};
        unsigned long long w[4];
        int got = sscanf(hex.c_str(), "%llx:%llx:%llx:%llx", &w[0], &w[1], &w[2], &w[3]);
        SD_CHECK(got == 4, "rng state: malformed hex string '", hex, "'");
        for (int i = 0; i < 4; ++i) s[i] = w[i];
        r.set_state(s);
        return r;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::array<uint64_t, 4> s_{};
};

}  // namespace sandesc
