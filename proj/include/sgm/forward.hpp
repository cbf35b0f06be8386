// SPDX-License-Identifier: Apache-2.0
//
// Ornstein-Uhlenbeck (variance-preserving) forward process
//   dX_t = -X_t dt + √2 σ dB_t,   X_t ~ e^{-t} X_0 + σ_t Z,
// plus the time change for a noise schedule α: the scheduled process at
// time t has the law of the constant-schedule process at u_t = ∫₀ᵗ α.
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "sgm/error.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"
#include "sgm/targets.hpp"

namespace sgm {

/// Noise schedule α: ℝ₊ → ℝ₊. Named presets cover the config file; `custom`
/// holds arbitrary callables for library users.
struct NoiseSchedule {
    enum class Kind { Constant, LinearRamp, Custom };
    Kind kind = Kind::Constant;
    double a0 = 1.0;  ///< constant value, or α(0) for the ramp
    double a1 = 0.0;  ///< ramp slope: α(s) = a0 + a1·s
    std::function<double(double)> custom;

    static NoiseSchedule constant(double value = 1.0) { return {Kind::Constant, value, 0.0, {}}; }
    static NoiseSchedule linear_ramp(double start, double slope) { return {Kind::LinearRamp, start, slope, {}}; }
    static NoiseSchedule from(std::function<double(double)> fn) { return {Kind::Custom, 0.0, 0.0, std::move(fn)}; }

    [[nodiscard]] double operator()(double s) const {
        switch (kind) {
        case Kind::Constant: return a0;
        case Kind::LinearRamp: return a0 + a1 * s;
        case Kind::Custom: return custom(s);
        }
        return a0;
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
        case Kind::Constant: return "constant";
        case Kind::LinearRamp: return "linear-ramp";
        case Kind::Custom: return "custom";
        }
        return "?";
    }
};

struct ForwardSpec {
    double sigma = 1.0;
    NoiseSchedule schedule = NoiseSchedule::constant();

    /// Checks σ ∈ [1/K, K].
    void validate(double bound_k = 0.0) const {
        if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidParams, "sigma must be positive");
        if (bound_k > 0.0 && (sigma < 1.0 / bound_k || sigma > bound_k))
            throw Error(ErrorCode::InvalidParams, "sigma outside [1/K, K]");
    }
};

/// σ_t = √(1 − e^{−2t}) σ, using expm1 so small t keeps full relative precision.
inline double sigma_t(const ForwardSpec& spec, double t) {
    if (t < 0.0) throw Error(ErrorCode::OutOfRange, "negative time");
    return std::sqrt(-std::expm1(-2.0 * t)) * spec.sigma;
}

/// Rows e^{−t} X₀ + σ_t Z with X₀ from the target (substream 0) and Z
/// (substream 1), each keyed per row so the output is worker-count independent.
inline Matrix forward_marginal_sample(const ForwardSpec& spec, const MixtureTarget& target, const Rng& rng, double t,
                                      std::size_t n) {
    if (t < 0.0) throw Error(ErrorCode::OutOfRange, "negative time");
    Matrix x0 = target.sample(rng.substream(0), n);
    const double decay = std::exp(-t);
    const double noise = sigma_t(spec, t);
    const Rng noise_rng = rng.substream(1);
    const std::size_t d = target.dim();
    parallel_for(n, [&](std::size_t i) {
        Rng sub = noise_rng.substream(i);
        auto row = x0.row(i);
        for (std::size_t k = 0; k < d; ++k) row[k] = decay * row[k] + noise * sub.normal();
    });
    return x0;
}

namespace detail {

inline double simpson(double fa, double fm, double fb, double a, double b) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); }

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(fa, flm, fm, a, m);
    const double right = simpson(fm, frm, fb, m, b);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// u_t = ∫₀ᵗ α(s) ds by adaptive Simpson (relative tolerance 1e-10).
/// Throws ScheduleNegative if α is negative at any quadrature node.
inline double time_change(const ForwardSpec& spec, double t, double rel_tol = 1e-10) {
    if (t < 0.0) throw Error(ErrorCode::OutOfRange, "negative time");
    if (spec.schedule.kind == NoiseSchedule::Kind::Constant) {
        if (spec.schedule.a0 < 0.0) throw Error(ErrorCode::ScheduleNegative, "constant schedule is negative");
        return spec.schedule.a0 * t;
    }
    if (t == 0.0) return 0.0;
    const std::function<double(double)> f = [&](double s) {
        const double v = spec.schedule(s);
        if (v < 0.0 || !std::isfinite(v))
            throw Error(ErrorCode::ScheduleNegative, "schedule negative or non-finite at s=" + std::to_string(s));
        return v;
    };
    const double fa = f(0.0), fm = f(0.5 * t), fb = f(t);
    const double whole = detail::simpson(fa, fm, fb, 0.0, t);
    const double scale = std::max(std::abs(whole), 1e-300);
    return detail::adaptive_simpson(f, 0.0, t, fa, fm, fb, whole, rel_tol * scale, 50);
}

/// Checks that u_t is strictly increasing on a uniform grid of [0, t_max]
/// and that it grows past `horizon` (a finite stand-in for u_t → ∞).
inline bool schedule_is_admissible(const ForwardSpec& spec, double t_max, double horizon, std::size_t points = 64) {
    double prev = 0.0;
    for (std::size_t i = 1; i <= points; ++i) {
        const double u = time_change(spec, t_max * static_cast<double>(i) / static_cast<double>(points));
        if (!(u > prev)) return false;
        prev = u;
    }
    return prev >= horizon;
}

/// Forward marginal of the scheduled process dY = −α_t Y dt + √(2α_t) σ dB.
inline Matrix scheduled_forward_marginal_sample(const ForwardSpec& spec, const MixtureTarget& target, const Rng& rng,
                                                double t, std::size_t n) {
    return forward_marginal_sample(spec, target, rng, time_change(spec, t), n);
}

}  // namespace sgm
