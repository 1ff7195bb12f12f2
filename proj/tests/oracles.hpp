#pragma once

// Independent reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace hctest {

// AUC by direct pair counting: P(score_pos > score_neg) + 0.5 P(equal).
inline double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    double wins = 0.0;
    for (double p : pos)
        for (double n : neg) {
            if (p > n) wins += 1.0;
            else if (p == n) wins += 0.5;
        }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Optimal 1-D 2-means by trying every split of the sorted values and
// minimizing within-cluster sum of squares. Returns per-value membership of
// the higher-mean cluster; all-equal input yields all zeros.
inline std::vector<std::uint8_t> exhaustive_two_means(const std::vector<double>& values) {
    size_t n = values.size();
    std::vector<std::uint8_t> out(n, 0);
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) return out;

    std::vector<double> prefix(n + 1, 0.0), prefix2(n + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        prefix[i + 1] = prefix[i] + sorted[i];
        prefix2[i + 1] = prefix2[i] + sorted[i] * sorted[i];
    }
    auto sse = [&](size_t lo, size_t hi) {  // [lo, hi)
        double cnt = static_cast<double>(hi - lo);
        double s = prefix[hi] - prefix[lo];
        return (prefix2[hi] - prefix2[lo]) - s * s / cnt;
    };

    size_t best_k = 1;
    double best = std::numeric_limits<double>::infinity();
    for (size_t k = 1; k < n; ++k) {  // low cluster = sorted[0..k)
        double cost = sse(0, k) + sse(k, n);
        if (cost < best) {
            best = cost;
            best_k = k;
        }
    }
    double threshold = sorted[best_k];  // smallest member of the high cluster
    for (size_t i = 0; i < n; ++i) out[i] = values[i] >= threshold ? 1 : 0;
    return out;
}

}  // namespace hctest
