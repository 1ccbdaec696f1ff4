#pragma once

#include <cmath>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "zaps/errors.hpp"

namespace zaps {

// Training-time noise schedule. All interfaces are 1-based in t (t in [1,T]);
// t = 0 denotes the clean state with alpha_bar = 1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;             // beta_t, index t-1
    std::vector<double> alphas;            // 1 - beta_t
    std::vector<double> alpha_bars;        // prod_{s<=t} alpha_s
    std::vector<double> posterior_sigmas;  // sqrt((1-abar_{t-1})/(1-abar_t) * beta_t)

    double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
    double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar(int t) const {
        return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)];
    }
    double posterior_sigma(int t) const {
        return posterior_sigmas[static_cast<std::size_t>(t - 1)];
    }
};

inline NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw config_error("schedule: T must be >= 2, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
        throw config_error("schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    s.posterior_sigmas.resize(static_cast<std::size_t>(T));

    const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
    double abar_prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double b = beta_start + step * static_cast<double>(t - 1);
        const double a = 1.0 - b;
        const double abar = abar_prev * a;
        s.betas[t - 1] = b;
        s.alphas[t - 1] = a;
        s.alpha_bars[t - 1] = abar;
        s.posterior_sigmas[t - 1] = std::sqrt((1.0 - abar_prev) / (1.0 - abar) * b);
        abar_prev = abar;
    }
    return s;
}

// Sub-schedule tau of the training steps, strictly increasing, 1-based.
// tau_at(i) is tau_i for i in [1,S]; tau_at(0) = 0 is the clean endpoint.
struct SubSchedule {
    enum class Kind { irregular, uniform };

    std::vector<int> tau;
    Kind kind = Kind::uniform;
    std::vector<int> segment_counts;  // irregular only

    int steps() const { return static_cast<int>(tau.size()); }
    int tau_at(int i) const { return i == 0 ? 0 : tau[static_cast<std::size_t>(i - 1)]; }
};

// Parses "c1,c2,...,ck" into per-segment sample counts. The first count
// belongs to the lowest-noise (smallest t) segment.
inline std::vector<int> parse_segment_spec(std::string_view spec) {
    std::vector<int> counts;
    std::size_t pos = 0;
    if (spec.empty()) throw config_error("schedule spec: empty");
    while (pos <= spec.size()) {
        const std::size_t comma = spec.find(',', pos);
        const std::string_view tok =
            spec.substr(pos, comma == std::string_view::npos ? spec.size() - pos
                                                             : comma - pos);
        int value = 0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (ec != std::errc() || ptr != tok.data() + tok.size())
            throw config_error("schedule spec: bad token '" + std::string(tok) + "'");
        if (value <= 0)
            throw config_error("schedule spec: counts must be positive, got " +
                               std::to_string(value));
        counts.push_back(value);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return counts;
}

// Partitions [1,T] into contiguous equal-length segments (earlier, lower-t
// segments absorb the division remainder) and takes counts[k] uniformly
// spaced samples inside segment k via floor striding.
inline SubSchedule build_irregular_subschedule(int T, const std::vector<int>& counts) {
    if (counts.empty()) throw config_error("subschedule: no segment counts");
    long total = 0;
    for (int c : counts) {
        if (c <= 0) throw config_error("subschedule: counts must be positive");
        total += c;
    }
    if (total > T)
        throw config_error("subschedule: counts sum " + std::to_string(total) +
                           " exceeds T=" + std::to_string(T));

    const int k = static_cast<int>(counts.size());
    const int base = T / k;
    const int rem = T % k;

    SubSchedule sub;
    sub.kind = SubSchedule::Kind::irregular;
    sub.segment_counts = counts;
    int start = 1;
    for (int seg = 0; seg < k; ++seg) {
        const int len = base + (seg < rem ? 1 : 0);
        const int c = counts[static_cast<std::size_t>(seg)];
        if (c > len)
            throw config_error("subschedule: segment " + std::to_string(seg + 1) +
                               " has " + std::to_string(len) + " steps but asks for " +
                               std::to_string(c) + " samples");
        for (int j = 0; j < c; ++j)
            sub.tau.push_back(start + static_cast<int>((static_cast<long>(j) * len) / c));
        start += len;
    }
    return sub;
}

inline SubSchedule build_uniform_subschedule(int T, int S) {
    if (S < 1 || S > T)
        throw config_error("subschedule: need 1 <= S <= T, got S=" + std::to_string(S));
    SubSchedule sub = build_irregular_subschedule(T, {S});
    sub.kind = SubSchedule::Kind::uniform;
    sub.segment_counts.clear();
    return sub;
}

}  // namespace zaps
