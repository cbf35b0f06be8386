// SPDX-License-Identifier: Apache-2.0
//
// Grid verifiers for the score regularity properties of mixture targets:
//   (A) ‖s*(t,x)‖ ≤ C(1+t⁻¹)(1+‖x‖)
//   (B) λ_max(∇s*(t,x) + I/σ²) ≤ C e^{-2t}(1 + t^{-(1-(β∧1)/2)})
//   (C)/(D) time-Hölder and space-gradient envelopes of s* + x/σ² on bulk balls.
// The constants are existential, so every check either takes a frozen
// constant from the caller or reports the fitted one.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/oracle.hpp"

namespace sgm {

/// Lattice points of [-r, r]^d (per_axis points per coordinate) inside the ball of radius r.
inline Matrix ball_grid(std::size_t d, double radius, std::size_t per_axis) {
    std::vector<double> coords(per_axis);
    for (std::size_t i = 0; i < per_axis; ++i)
        coords[i] = per_axis == 1 ? 0.0 : -radius + 2.0 * radius * static_cast<double>(i) / static_cast<double>(per_axis - 1);
    std::vector<double> flat;
    std::vector<std::size_t> idx(d, 0);
    Vector p(d);
    while (true) {
        for (std::size_t k = 0; k < d; ++k) p[k] = coords[idx[k]];
        if (norm(p) <= radius * (1.0 + 1e-12)) flat.insert(flat.end(), p.begin(), p.end());
        std::size_t k = 0;
        while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == d) break;
    }
    const std::size_t rows = flat.size() / d;
    return Matrix(rows, d, std::move(flat));
}

/// Geometric grid of `count` times from lo to hi inclusive.
inline Vector geometric_times(double lo, double hi, std::size_t count) {
    Vector t(count);
    for (std::size_t i = 0; i < count; ++i)
        t[i] = count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
    return t;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

// ---------------------------------------------------------------------------
// (A)
// ---------------------------------------------------------------------------

struct PropertyAReport {
    Vector times;
    double x_radius = 0.0;
    std::size_t x_points = 0;
    Vector max_ratio_per_time;
    double max_ratio = 0.0;
    double constant = 0.0;
    bool pass = false;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"property", "A"},
                {"grid", {{"t_min", times.front()}, {"t_max", times.back()}, {"t_count", times.size()},
                          {"x_radius", x_radius}, {"x_points", x_points}}},
                {"max_ratio", max_ratio},
                {"fitted_constant", max_ratio},
                {"constant", constant},
                {"pass", pass}};
    }
};

inline double property_a_ratio(const ScoreOracle& oracle, double t, std::span<const double> x) {
    const Vector s = oracle.score(t, x);
    return norm(s) / ((1.0 + 1.0 / t) * (1.0 + norm(x)));
}

inline PropertyAReport check_property_A(const ScoreOracle& oracle, std::span<const double> times, const Matrix& xs,
                                        double constant) {
    PropertyAReport rep;
    rep.times.assign(times.begin(), times.end());
    rep.x_points = xs.rows();
    for (std::size_t i = 0; i < xs.rows(); ++i) rep.x_radius = std::max(rep.x_radius, norm(xs.row(i)));
    rep.max_ratio_per_time.assign(times.size(), 0.0);
    parallel_for(times.size(), [&](std::size_t ti) {
        double best = 0.0;
        for (std::size_t i = 0; i < xs.rows(); ++i) best = std::max(best, property_a_ratio(oracle, times[ti], xs.row(i)));
        rep.max_ratio_per_time[ti] = best;
    });
    rep.max_ratio = *std::max_element(rep.max_ratio_per_time.begin(), rep.max_ratio_per_time.end());
    rep.constant = constant;
    rep.pass = rep.max_ratio <= constant;
    return rep;
}

// ---------------------------------------------------------------------------
// (B)
// ---------------------------------------------------------------------------

/// λ_max(∇s*(t,x) + I/σ²) at a single point.
inline double shifted_lambda_max(const ScoreOracle& oracle, double t, std::span<const double> x) {
    Matrix j = oracle.jacobian(t, x);
    const double inv = 1.0 / (oracle.spec().sigma * oracle.spec().sigma);
    for (std::size_t i = 0; i < j.rows(); ++i) j(i, i) += inv;
    return jacobi_eigenvalues(j).back();
}

/// sup_x of shifted λ_max: best lattice point, then gradient-free coordinate
/// hill climbing (accept the best improving ±step move, halve the step otherwise).
inline double sup_shifted_lambda_max(const ScoreOracle& oracle, double t, const Matrix& xs, std::size_t climb_steps = 20,
                                     double initial_step = 0.25) {
    const std::size_t d = xs.cols();
    std::size_t best_i = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.rows(); ++i) {
        const double v = shifted_lambda_max(oracle, t, xs.row(i));
        if (v > best) {
            best = v;
            best_i = i;
        }
    }
    Vector x(xs.row(best_i).begin(), xs.row(best_i).end());
    double step = initial_step;
    Vector trial(d);
    for (std::size_t it = 0; it < climb_steps; ++it) {
        double cand_best = best;
        Vector cand = x;
        for (std::size_t k = 0; k < d; ++k)
            for (double dir : {-1.0, 1.0}) {
                trial = x;
                trial[k] += dir * step;
                const double v = shifted_lambda_max(oracle, t, trial);
                if (v > cand_best) {
                    cand_best = v;
                    cand = trial;
                }
            }
        if (cand_best > best) {
            best = cand_best;
            x = cand;
        } else {
            step *= 0.5;
        }
    }
    return best;
}

inline double property_b_envelope(double t, double beta) {
    return std::exp(-2.0 * t) * (1.0 + std::pow(t, -(1.0 - std::min(beta, 1.0) / 2.0)));
}

struct PropertyBReport {
    Vector times;
    Vector sup_lambda;   ///< measured sup_x λ_max per time
    Vector envelope;     ///< e^{-2t}(1 + t^{-(1-(β∧1)/2)})
    double fitted_constant = 0.0;
    double constant = 0.0;  ///< constant the curve was tested against
    double integral = 0.0;  ///< trapezoid ∫ sup λ_max dt over the grid
    bool dominated = false;
    bool pass = false;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"property", "B"},
                {"grid", {{"t_min", times.front()}, {"t_max", times.back()}, {"t_count", times.size()}}},
                {"max_ratio", fitted_constant},
                {"fitted_constant", fitted_constant},
                {"constant", constant},
                {"integral", integral},
                {"pass", pass}};
    }
};

/// When `constant <= 0` the fitted constant is used (and the domination test is
/// then trivially met); pass additionally needs a finite time integral.
inline PropertyBReport check_property_B(const ScoreOracle& oracle, std::span<const double> times, const Matrix& xs,
                                        double beta, double constant = 0.0, std::size_t climb_steps = 20) {
    PropertyBReport rep;
    rep.times.assign(times.begin(), times.end());
    rep.sup_lambda.assign(times.size(), 0.0);
    rep.envelope.assign(times.size(), 0.0);
    parallel_for(times.size(), [&](std::size_t i) {
        rep.sup_lambda[i] = sup_shifted_lambda_max(oracle, times[i], xs, climb_steps);
        rep.envelope[i] = property_b_envelope(times[i], beta);
    });
    for (std::size_t i = 0; i < times.size(); ++i)
        rep.fitted_constant = std::max(rep.fitted_constant, rep.sup_lambda[i] / rep.envelope[i]);
    rep.constant = constant > 0.0 ? constant : rep.fitted_constant;
    rep.dominated = true;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (rep.sup_lambda[i] > rep.constant * rep.envelope[i]) rep.dominated = false;
    rep.integral = trapezoid(rep.times, rep.sup_lambda);
    rep.pass = rep.dominated && std::isfinite(rep.integral);
    return rep;
}

// ---------------------------------------------------------------------------
// (C)/(D)
// ---------------------------------------------------------------------------

/// r(t, x) = s*(t, x) + x/σ², the deviation from the stationary score.
inline Vector stationary_residual(const ScoreOracle& oracle, double t, std::span<const double> x) {
    Vector r = oracle.score(t, x);
    const double inv = 1.0 / (oracle.spec().sigma * oracle.spec().sigma);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += x[i] * inv;
    return r;
}

/// Radius of the ball holding a (1-ε) fraction of forward samples at time t.
inline double bulk_radius(const ScoreOracle& oracle, double t, double eps, const Rng& rng, std::size_t n = 20000) {
    const Matrix xs = forward_marginal_sample(oracle.spec(), oracle.target(), rng, t, n);
    Vector r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = norm(xs.row(i));
    std::sort(r.begin(), r.end());
    const auto k = static_cast<std::size_t>(std::ceil((1.0 - eps) * static_cast<double>(n))) - 1;
    return r[std::min(k, n - 1)];
}

struct TimePair {
    double t1 = 0.0;
    double t2 = 0.0;
};

struct PropertyCDReport {
    std::vector<TimePair> pairs;
    Vector time_differences;   ///< max_x ‖r(t1,x) − r(t2,x)‖ per pair
    Vector time_normalized;    ///< … / (|t1−t2|^{1/2} t_min⁻¹)
    Vector grad_times;
    Vector grad_norms;         ///< max_x ‖∇s*(t,x) + I/σ²‖₂
    Vector grad_normalized;    ///< … / e^{-t}(1 + t^{-((1/2+(1-β)/2)∨0)})
    double constant_c = 0.0;
    double constant_d = 0.0;
    bool pass = false;

    [[nodiscard]] nlohmann::json to_json() const {
        const double mc = time_normalized.empty() ? 0.0 : *std::max_element(time_normalized.begin(), time_normalized.end());
        const double md = grad_normalized.empty() ? 0.0 : *std::max_element(grad_normalized.begin(), grad_normalized.end());
        return {{"property", "CD"},
                {"grid", {{"pairs", pairs.size()}, {"grad_times", grad_times.size()}}},
                {"max_ratio", std::max(mc, md)},
                {"fitted_constant", {{"C", mc}, {"D", md}}},
                {"constant", {{"C", constant_c}, {"D", constant_d}}},
                {"pass", pass}};
    }
};

inline double property_d_envelope(double t, double beta) {
    const double exponent = std::max(0.5 + (1.0 - beta) / 2.0, 0.0);
    return std::exp(-t) * (1.0 + std::pow(t, -exponent));
}

/// x-grids are scaled per time to the bulk radius for that time (ε-quantile
/// ball), replacing the non-constructive high-probability sets.
inline PropertyCDReport check_properties_CD(const ScoreOracle& oracle, const std::vector<TimePair>& pairs,
                                            std::span<const double> grad_times, double beta, double eps,
                                            std::size_t per_axis, const Rng& rng, double constant_c,
                                            double constant_d) {
    PropertyCDReport rep;
    const std::size_t d = oracle.dim();
    rep.pairs = pairs;
    rep.time_differences.assign(pairs.size(), 0.0);
    rep.time_normalized.assign(pairs.size(), 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double tmin = std::min(pairs[p].t1, pairs[p].t2);
        const double radius = bulk_radius(oracle, tmin, eps, rng.substream(0, p));
        const Matrix xs = ball_grid(d, radius, per_axis);
        double worst = 0.0;
        for (std::size_t i = 0; i < xs.rows(); ++i) {
            const Vector a = stationary_residual(oracle, pairs[p].t1, xs.row(i));
            const Vector b = stationary_residual(oracle, pairs[p].t2, xs.row(i));
            worst = std::max(worst, std::sqrt(squared_distance(a, b)));
        }
        rep.time_differences[p] = worst;
        rep.time_normalized[p] = worst / (std::sqrt(std::abs(pairs[p].t1 - pairs[p].t2)) / tmin);
    }
    rep.grad_times.assign(grad_times.begin(), grad_times.end());
    rep.grad_norms.assign(grad_times.size(), 0.0);
    rep.grad_normalized.assign(grad_times.size(), 0.0);
    const double inv = 1.0 / (oracle.spec().sigma * oracle.spec().sigma);
    for (std::size_t g = 0; g < grad_times.size(); ++g) {
        const double t = grad_times[g];
        const Matrix xs = ball_grid(d, bulk_radius(oracle, t, eps, rng.substream(1, g)), per_axis);
        double worst = 0.0;
        for (std::size_t i = 0; i < xs.rows(); ++i) {
            Matrix j = oracle.jacobian(t, xs.row(i));
            for (std::size_t k = 0; k < d; ++k) j(k, k) += inv;
            const Vector ev = jacobi_eigenvalues(j);
            worst = std::max({worst, std::abs(ev.front()), std::abs(ev.back())});
        }
        rep.grad_norms[g] = worst;
        rep.grad_normalized[g] = worst / property_d_envelope(t, beta);
    }
    rep.constant_c = constant_c;
    rep.constant_d = constant_d;
    rep.pass = true;
    for (double v : rep.time_normalized)
        if (v > constant_c) rep.pass = false;
    for (double v : rep.grad_normalized)
        if (v > constant_d) rep.pass = false;
    return rep;
}

}  // namespace sgm
