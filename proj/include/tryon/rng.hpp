#ifndef TRYON_RNG_HPP
#define TRYON_RNG_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

namespace tryon {

// Deterministic RNG with cheap stream derivation. Gaussian draws use
// Box-Muller on explicit 53-bit uniforms so sequences are identical
// across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { set_seed(seed); }

    void set_seed(uint64_t seed) {
        state_ = seed;
        // avoid the all-zero fixed point and decorrelate small seeds
        next_u64();
        next_u64();
        have_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        // splitmix64
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int64_t uniform_int(int64_t n) {  // [0, n)
        return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Independent stream for (this seed, index) pairs.
    static uint64_t derive(uint64_t seed, uint64_t index) {
        uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL + index * 0xD1B54A32D192ED03ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << state_ << " " << (have_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_;
        return os.str();
    }
    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int hs = 0;
        is >> state_ >> hs >> spare_;
        have_spare_ = hs != 0;
    }

private:
    uint64_t state_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for config hashes and output manifests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

}  // namespace tryon

#endif
