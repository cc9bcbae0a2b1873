#pragma once

#include <cmath>
#include <cstdint>

namespace tsab {

// Counter-based deterministic generator (splitmix64 over seed ^ counter).
// The same seed yields the same draw sequence on every platform: all state
// is two u64 values and the output path is pure integer arithmetic.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller. Consumes two draws per pair; the
    // second value of the pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Index in [0, n).
    std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

    // Deterministic child stream, distinct from the parent for any tag.
    Rng spawn(std::uint64_t tag) {
        std::uint64_t z = seed_ ^ (0xd1342543de82ef95ULL * (tag + 0x632be59bd9b4e019ULL));
        z = (z ^ (z >> 29)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return Rng(z ^ (z >> 32));
    }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace tsab
