#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

namespace cycle {

// Two-row Levenshtein over any random-access sequences with comparable
// elements; insert/delete/substitute all cost 1.
template <class SeqA, class SeqB>
std::size_t levenshtein(const SeqA& a, const SeqB& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1);
    std::vector<std::size_t> cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// 1 - d/max(|a|,|b|); 1.0 when both are empty.
template <class SeqA, class SeqB>
double normalized_similarity(const SeqA& a, const SeqB& b) {
    std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

}  // namespace cycle
