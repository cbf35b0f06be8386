// SPDX-License-Identifier: Apache-2.0
//
// Two-sample distances between equal-size point sets and moment diagnostics.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgm/error.hpp"
#include "sgm/numerics/assignment.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"

namespace sgm {

struct W1Estimate {
    double value = 0.0;
    std::string method;  ///< "exact_assignment" or "sliced"
    std::size_t n_points = 0;
    std::size_t n_projections = 0;
    double std_error = 0.0;

    [[nodiscard]] nlohmann::json to_json(std::uint64_t seed = 0) const {
        return {{"metric", "w1"}, {"method", method}, {"value", value}, {"std_error", std_error},
                {"n", n_points}, {"n_projections", n_projections}, {"seed", seed}};
    }
};

inline constexpr std::size_t kExactW1Limit = 4096;
inline constexpr std::size_t kAutoExactLimit = 1024;
inline constexpr std::size_t kDefaultProjections = 256;

/// Exact empirical W₁ = min_π (1/n) Σ ‖xᵢ − y_{π(i)}‖ by optimal assignment.
inline double w1_exact(const Matrix& xs, const Matrix& ys) {
    if (xs.rows() != ys.rows() || xs.cols() != ys.cols()) throw Error(ErrorCode::SizeMismatch, "w1_exact shapes differ");
    const std::size_t n = xs.rows();
    if (n > kExactW1Limit) throw Error(ErrorCode::TooLarge, "w1_exact limited to 4096 points");
    if (n == 0) return 0.0;
    Matrix cost(n, n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) cost(i, j) = std::sqrt(squared_distance(xs.row(i), ys.row(j)));
    });
    const Assignment a = assignment_min_cost(cost);
    // Sum the matched costs directly so identical sets give exactly 0.
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost(i, a.permutation[i]);
    return s / static_cast<double>(n);
}

/// 1-D W₁ between equal-size samples: mean absolute difference of order statistics.
inline double w1_sorted_1d(Vector a, Vector b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

/// Sliced W₁: average over random unit directions (projection p uses
/// rng.substream(p)) of the 1-D W₁ of the projected samples.
inline W1Estimate w1_sliced(const Matrix& xs, const Matrix& ys, std::size_t n_proj, const Rng& rng) {
    if (xs.rows() != ys.rows() || xs.cols() != ys.cols()) throw Error(ErrorCode::SizeMismatch, "w1_sliced shapes differ");
    if (n_proj == 0) throw Error(ErrorCode::InvalidParams, "need at least one projection");
    const std::size_t n = xs.rows(), d = xs.cols();
    Vector per(n_proj, 0.0);
    parallel_for(n_proj, [&](std::size_t p) {
        Rng r = rng.substream(p);
        Vector dir(d);
        double nd = 0.0;
        do {
            r.fill_normal(dir);
            nd = norm(dir);
        } while (nd == 0.0);
        for (double& v : dir) v /= nd;
        Vector a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = dot(xs.row(i), dir);
            b[i] = dot(ys.row(i), dir);
        }
        per[p] = w1_sorted_1d(std::move(a), std::move(b));
    });
    double sum = 0.0, sum2 = 0.0;
    for (double v : per) {
        sum += v;
        sum2 += v * v;
    }
    const double k = static_cast<double>(n_proj);
    W1Estimate e;
    e.value = sum / k;
    e.method = "sliced";
    e.n_points = n;
    e.n_projections = n_proj;
    e.std_error = n_proj > 1 ? std::sqrt(std::max(0.0, sum2 / k - e.value * e.value) / (k - 1.0)) : 0.0;
    return e;
}

/// Exact assignment when n ≤ 1024, sliced otherwise.
inline W1Estimate w1_auto(const Matrix& xs, const Matrix& ys, const Rng& rng, std::size_t n_proj = kDefaultProjections) {
    if (xs.rows() <= kAutoExactLimit) {
        W1Estimate e;
        e.value = w1_exact(xs, ys);
        e.method = "exact_assignment";
        e.n_points = xs.rows();
        return e;
    }
    return w1_sliced(xs, ys, n_proj, rng);
}

struct MomentReport {
    Vector mean;
    Matrix covariance;
    double radial_q50 = 0.0, radial_q90 = 0.0, radial_q99 = 0.0;

    [[nodiscard]] nlohmann::json to_json() const {
        std::vector<std::vector<double>> cov;
        for (std::size_t i = 0; i < covariance.rows(); ++i)
            cov.emplace_back(covariance.row(i).begin(), covariance.row(i).end());
        return {{"mean", mean}, {"covariance", cov},
                {"radial_quantiles", {{"q50", radial_q50}, {"q90", radial_q90}, {"q99", radial_q99}}}};
    }
};

/// Linear-interpolation quantile of a sorted vector.
inline double sorted_quantile(const Vector& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline MomentReport moment_report(const Matrix& xs) {
    const std::size_t n = xs.rows(), d = xs.cols();
    if (n < 2) throw Error(ErrorCode::InvalidParams, "moment_report needs at least two points");
    MomentReport r;
    r.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) r.mean[k] += xs(i, k);
    for (double& m : r.mean) m /= static_cast<double>(n);
    r.covariance = Matrix(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) r.covariance(a, b) += (xs(i, a) - r.mean[a]) * (xs(i, b) - r.mean[b]);
    for (double& v : r.covariance.data()) v /= static_cast<double>(n - 1);
    Vector radii(n);
    for (std::size_t i = 0; i < n; ++i) radii[i] = norm(xs.row(i));
    std::sort(radii.begin(), radii.end());
    r.radial_q50 = sorted_quantile(radii, 0.50);
    r.radial_q90 = sorted_quantile(radii, 0.90);
    r.radial_q99 = sorted_quantile(radii, 0.99);
    return r;
}

}  // namespace sgm
