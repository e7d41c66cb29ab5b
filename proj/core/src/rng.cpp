#include "mvgs/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace mvgs {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::vector<int> Rng::choose(int n, int k) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

std::ostream& operator<<(std::ostream& os, const Rng& r) {
    // hexfloat keeps the cached variate exact
    os << r.engine_ << ' ' << (r.has_spare_ ? 1 : 0) << ' ' << std::hexfloat << r.spare_ << std::defaultfloat;
    return os;
}

std::istream& operator>>(std::istream& is, Rng& r) {
    int spare_flag = 0;
    std::string spare_text;
    is >> r.engine_ >> spare_flag >> spare_text;
    r.has_spare_ = spare_flag != 0;
    r.spare_ = std::strtod(spare_text.c_str(), nullptr);
    return is;
}

}  // namespace mvgs
