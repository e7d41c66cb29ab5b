#pragma once

// Seeded random source with distribution code owned here, so sequences are
// identical across standard library implementations.

#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <vector>

namespace mvgs {

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

    /// Stream derived from (seed, index); used for per-draw determinism.
    static Rng derive(std::uint64_t seed, std::uint64_t index) { return Rng(mix(seed) ^ mix(index + 0x9e3779b97f4a7c15ULL)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller; caches the second variate.
    double normal();

    /// k distinct indices from [0, n) in random order (partial Fisher-Yates).
    std::vector<int> choose(int n, int k);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    friend std::ostream& operator<<(std::ostream& os, const Rng& r);
    friend std::istream& operator>>(std::istream& is, Rng& r);
    friend bool operator==(const Rng& a, const Rng& b) {
        return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ && a.spare_ == b.spare_;
    }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mvgs
