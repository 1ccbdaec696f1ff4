#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>

#include "zaps/image.hpp"

namespace zaps::rng {

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Every consumer of randomness owns a named substream derived from the one
// master seed; draw order in one stream cannot perturb any other stream.
constexpr std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
    return splitmix64(master ^ splitmix64(fnv1a(name)));
}

// mt19937_64 with a hand-rolled Box-Muller transform so draws are identical
// across standard libraries (std::normal_distribution is not portable).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : eng_(seed) {}

    double uniform() {
        // 53-bit mantissa in (0, 1]
        return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

    ImageTensor draw_normal(const Shape& shape) {
        ImageTensor x(shape);
        fill_normal(x.flat());
        return x;
    }

    // Bounded integer draw for shuffles; modulo bias is irrelevant here and
    // the result is portable.
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace zaps::rng
