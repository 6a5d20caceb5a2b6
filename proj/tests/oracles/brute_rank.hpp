#pragma once

// Ranking by exhaustive search over permutations: the lexicographically
// smallest ordering of named indices whose values are non-increasing. That
// is the lowest-index tie rule, found without sorting.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

namespace oracle {

inline std::vector<std::size_t> brute_named_at(const std::vector<double>& x) {
    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
        bool ok = true;
        for (std::size_t j = 0; j + 1 < perm.size(); ++j) {
            if (x[perm[j]] < x[perm[j + 1]]) ok = false;
            // equal values must keep ascending named order
            if (x[perm[j]] == x[perm[j + 1]] && perm[j] > perm[j + 1]) ok = false;
        }
        if (ok) return perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return {};
}

}  // namespace oracle
