#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <vector>

namespace cpcox {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

// Deterministic sub-seed from a root seed and a tuple of integer keys.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t sm = root;
    detail::splitmix64(sm);
    for (std::uint64_t k : keys) {
        sm ^= detail::splitmix64(sm) ^ (k + 0x9e3779b97f4a7c15ULL);
        detail::splitmix64(sm);
    }
    return sm;
}

// xoshiro256++ with splitmix64 seeding. Streams are keyed by an explicit
// tuple of integers so that (root seed, subject/replicate indices) always
// map to the same sequence regardless of execution order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : state_) w = detail::splitmix64(sm);
    }

    static Rng stream(std::uint64_t root, std::initializer_list<std::uint64_t> keys) {
        return Rng(derive_seed(root, keys));
    }

    std::uint64_t next_u64() {
        std::uint64_t* s = state_;
        const std::uint64_t result = detail::rotl64(s[0] + s[3], 23) + s[0];
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl64(s[3], 45);
        return result;
    }

    // uniform on the open interval (0,1); safe to pass through log()
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    double exponential(double rate) {
        if (rate <= 0.0) return std::numeric_limits<double>::infinity();
        return -std::log(uniform()) / rate;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // index into a probability vector by CDF inversion
    std::size_t discrete(const std::vector<double>& probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.empty() ? 0 : probs.size() - 1;
    }

private:
    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace cpcox
