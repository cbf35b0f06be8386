// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/linalg.hpp"

namespace sgm {

struct Assignment {
    std::vector<std::size_t> permutation;  ///< row i is matched to column permutation[i]
    double total_cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square cost matrix
/// (Hungarian method with potentials, O(n³)).
inline Assignment assignment_min_cost(const Matrix& cost) {
    if (cost.rows() != cost.cols()) throw Error(ErrorCode::SizeMismatch, "assignment needs a square cost matrix");
    for (double v : cost.data())
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "assignment cost contains NaN or infinity");

    const std::size_t n = cost.rows();
    Assignment result;
    if (n == 0) return result;

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);

    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            const auto row = cost.row(i0 - 1);
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    result.permutation.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) result.permutation[match[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) result.total_cost += cost(i, result.permutation[i]);
    return result;
}

}  // namespace sgm
