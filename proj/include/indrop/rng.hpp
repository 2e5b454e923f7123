#pragma once

// Named, independently seeded random streams.
//
// Seed recipe (bit-exact across implementations): the seed for run i and
// stream `name` is the low 64 bits of SHA-256("master:<seed>:run:<i>:stream:<name>"),
// i.e. the last 8 digest bytes read big-endian. Golden vectors live in
// data/seed_golden_vectors.txt.
//
// Draws are mapped from raw mt19937_64 output by hand (no std distributions),
// so streams are reproducible across standard library versions.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "indrop/hash.hpp"

namespace indrop {

inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t run_index,
                                 const std::string& stream_name) {
    const std::string s = "master:" + std::to_string(master_seed) +
                          ":run:" + std::to_string(run_index) +
                          ":stream:" + stream_name;
    const auto d = sha256_bytes(s);
    std::uint64_t out = 0;
    for (int i = 24; i < 32; ++i) out = (out << 8) | d[i];
    return out;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}
    RngStream(std::uint64_t master_seed, std::uint64_t run_index, const std::string& name)
        : eng_(derive_seed(master_seed, run_index, name)) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n == 0");
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller (cached spare)
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void shuffle(std::vector<int>& a) {
        for (std::size_t i = a.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(a[i - 1], a[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace indrop
