#pragma once

// Test-only reference implementations. Deliberately brute-force and kept
// independent of the library code paths they are used to check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracles {

struct GroupOutcome {
    double idle = 0.0;
    double success = 0.0;
    double collision = 0.0;
};

/// Exhaustive 2^G enumeration over independent per-node activation events.
/// Activation probability of node i is 1 - exp(-lambda_i * tau_i).
inline GroupOutcome enumerate_group(const std::vector<double>& lambda_tau) {
    const std::size_t g = lambda_tau.size();
    std::vector<double> p(g);
    for (std::size_t i = 0; i < g; ++i) p[i] = -std::expm1(-lambda_tau[i]);
    GroupOutcome out;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << g); ++mask) {
        double prob = 1.0;
        int active = 0;
        for (std::size_t i = 0; i < g; ++i) {
            if (mask & (std::uint64_t{1} << i)) {
                prob *= p[i];
                ++active;
            } else {
                prob *= 1.0 - p[i];
            }
        }
        if (active == 0)
            out.idle += prob;
        else if (active == 1)
            out.success += prob;
        else
            out.collision += prob;
    }
    return out;
}

/// Best achievable |sum(left) - sum(right)| over all 2-partitions with two
/// non-empty sides. Usable up to ~20 items.
inline double best_partition_imbalance(const std::vector<double>& weights) {
    const std::size_t n = weights.size();
    double total = 0.0;
    for (double w : weights) total += w;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
        double left = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (std::uint64_t{1} << i)) left += weights[i];
        best = std::min(best, std::abs(total - 2.0 * left));
    }
    return best;
}

/// Sample mean and standard error of a series.
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
    MeanStderr r;
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    return r;
}

}  // namespace oracles
