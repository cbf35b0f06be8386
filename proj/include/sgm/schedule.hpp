// SPDX-License-Identifier: Apache-2.0
//
// Time grids and per-interval architecture sizes.
//
//   T̲ = (C n)^{-2(β+1)/(2β+d)},  T̄ = C_high log n (rounded up so T̄/T̲ = 2^m)
//   τ_k = 2^k T̲,  τ_{k,j} = (1 + j/Υ_k) τ_k,  Υ_k = ⌈(τ_k n^{2/(2β+d)})^{(d-2)/d}⌉
//   W_k = C log(n)^{C₂} τ_k⁻¹ n^{(d-2)/(2β+d)},  B_k = C n^{C₂}
//   V_k = C log(n)^{C₂} (τ_k ∧ 1)^{-1/2},  V'_k = C e^{-τ_k} (τ_k ∧ 1)^{-1+(β∧1)/d}
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/hash.hpp"

namespace sgm {

/// Minimax W₁ exponent (β+1)/(2β+d).
inline double rate_exponent(double beta, double d) { return (beta + 1.0) / (2.0 * beta + d); }

struct IntervalArch {
    std::size_t depth = 1;   ///< L_k, hidden layers
    std::size_t width = 4;   ///< W_k
    double bound_b = 1.0;    ///< B_k
    double v_cap = 1.0;      ///< V_k
    double vp_cap = 1.0;     ///< V'_k
};

enum class ScheduleMode { Formula, Manual };

struct ScheduleParams {
    std::size_t n = 1024;
    double beta = 1.0;
    std::size_t d = 3;
    double c = 1.0;
    double c2 = 1.0;
    /// T̄ = c_high·log n. Non-positive means σ², the smallest value with e^{-T̄/σ²} ≤ 1/n.
    double c_high = 0.0;
    double sigma = 1.0;
    std::size_t width_min = 4;
    std::size_t width_max = 512;
    std::size_t depth = 0;  ///< 0: L_k = ⌈C⌉
    ScheduleMode mode = ScheduleMode::Formula;

    // Manual mode. Empty vectors fall back to the rate formulas; a single
    // entry is broadcast to every coarse interval.
    double t_low = 0.0;
    double t_high = 0.0;
    std::vector<std::size_t> upsilon;
    std::vector<std::size_t> widths;
};

struct IntervalIndex {
    std::size_t k = 0;
    std::size_t j = 0;
    std::size_t flat = 0;  ///< position in the flattened (k, j) list
};

class TimeSchedule {
public:
    TimeSchedule() = default;

    [[nodiscard]] double t_low() const noexcept { return tau_.front(); }
    [[nodiscard]] double t_high() const noexcept { return tau_.back(); }
    [[nodiscard]] std::size_t coarse_count() const noexcept { return tau_.size() - 1; }  ///< m
    [[nodiscard]] const std::vector<double>& tau() const noexcept { return tau_; }
    [[nodiscard]] std::size_t upsilon(std::size_t k) const { return upsilon_.at(k); }
    [[nodiscard]] const IntervalArch& arch(std::size_t k) const { return arch_.at(k); }
    [[nodiscard]] const ScheduleParams& params() const noexcept { return params_; }

    /// τ_{k,j}; j = Υ_k returns τ_{k+1} exactly.
    [[nodiscard]] double fine(std::size_t k, std::size_t j) const {
        if (j == upsilon_.at(k)) return tau_[k + 1];
        return (1.0 + static_cast<double>(j) / static_cast<double>(upsilon_[k])) * tau_[k];
    }

    /// All fine nodes, ascending, T̲ … T̄.
    [[nodiscard]] const std::vector<double>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t interval_count() const noexcept { return nodes_.size() - 1; }
    [[nodiscard]] IntervalIndex interval(std::size_t flat) const { return index_.at(flat); }
    [[nodiscard]] double interval_start(std::size_t flat) const { return nodes_.at(flat); }
    [[nodiscard]] double interval_end(std::size_t flat) const { return nodes_.at(flat + 1); }

    /// Half-open lookup [τ_{k,j}, τ_{k,j+1}); t = T̄ maps to the last interval.
    [[nodiscard]] IntervalIndex locate(double t) const {
        if (!(t >= t_low() && t <= t_high())) throw Error(ErrorCode::OutOfRange, "time outside [T_low, T_high]");
        if (t == t_high()) return index_.back();
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
        return index_[static_cast<std::size_t>(it - nodes_.begin()) - 1];
    }

    [[nodiscard]] std::uint64_t hash() const {
        Fnv1a64 h;
        h.update("sgm-schedule-v1");
        h.update_u64(params_.n);
        h.update_f64(params_.beta);
        h.update_u64(params_.d);
        for (double v : nodes_) h.update_f64(v);
        for (const auto& a : arch_) {
            h.update_u64(a.depth);
            h.update_u64(a.width);
            h.update_f64(a.bound_b);
            h.update_f64(a.v_cap);
            h.update_f64(a.vp_cap);
        }
        return h.digest();
    }

private:
    friend TimeSchedule build_schedule(const ScheduleParams& p);

    void finalize() {
        nodes_.clear();
        index_.clear();
        for (std::size_t k = 0; k < coarse_count(); ++k)
            for (std::size_t j = 0; j < upsilon_[k]; ++j) {
                index_.push_back({k, j, nodes_.size()});
                nodes_.push_back(fine(k, j));
            }
        nodes_.push_back(tau_.back());
    }

    ScheduleParams params_;
    std::vector<double> tau_;
    std::vector<std::size_t> upsilon_;
    std::vector<IntervalArch> arch_;
    std::vector<double> nodes_;
    std::vector<IntervalIndex> index_;
};

inline std::size_t upsilon_formula(double tau_k, std::size_t n, double beta, std::size_t d) {
    const double nn = static_cast<double>(n);
    const double dd = static_cast<double>(d);
    const double base = tau_k * std::pow(nn, 2.0 / (2.0 * beta + dd));
    const double v = std::ceil(std::pow(base, (dd - 2.0) / dd));
    return std::max<std::size_t>(1, static_cast<std::size_t>(v));
}

inline IntervalArch arch_formula(const ScheduleParams& p, double tau_k) {
    const double nn = static_cast<double>(p.n);
    const double dd = static_cast<double>(p.d);
    const double logn_c2 = std::pow(std::log(nn), p.c2);
    const double tmin1 = std::min(tau_k, 1.0);
    IntervalArch a;
    a.depth = p.depth > 0 ? p.depth : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p.c)));
    const double w = std::ceil(p.c * logn_c2 / tau_k * std::pow(nn, (dd - 2.0) / (2.0 * p.beta + dd)));
    a.width = static_cast<std::size_t>(std::clamp(w, static_cast<double>(p.width_min), static_cast<double>(p.width_max)));
    a.bound_b = p.c * std::pow(nn, p.c2);
    a.v_cap = p.c * logn_c2 / std::sqrt(tmin1);
    a.vp_cap = p.c * std::exp(-tau_k) * std::pow(tmin1, -1.0 + std::min(p.beta, 1.0) / dd);
    return a;
}

inline TimeSchedule build_schedule(const ScheduleParams& p) {
    if (!(p.beta > 0.0)) throw Error(ErrorCode::InvalidParams, "beta must be positive");
    if (p.n < 2) throw Error(ErrorCode::InvalidParams, "n must be at least 2");
    if (p.d < 1) throw Error(ErrorCode::InvalidParams, "d must be at least 1");
    if (!(p.c > 0.0) || !(p.sigma > 0.0)) throw Error(ErrorCode::InvalidParams, "C and sigma must be positive");
    if (p.width_min < 1 || p.width_min > p.width_max) throw Error(ErrorCode::InvalidParams, "bad width clamp");

    const double nn = static_cast<double>(p.n);
    const double dd = static_cast<double>(p.d);
    double lo = 0.0, hi = 0.0;
    if (p.mode == ScheduleMode::Formula) {
        lo = std::pow(p.c * nn, -2.0 * (p.beta + 1.0) / (2.0 * p.beta + dd));
        const double c_high = p.c_high > 0.0 ? p.c_high : p.sigma * p.sigma;
        hi = c_high * std::log(nn);
    } else {
        lo = p.t_low;
        hi = p.t_high;
    }
    if (!(lo > 0.0) || !(hi > lo)) throw Error(ErrorCode::InvalidParams, "need 0 < T_low < T_high");

    TimeSchedule s;
    s.params_ = p;
    const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(std::log2(hi / lo) - 1e-12)));
    s.tau_.resize(m + 1);
    for (std::size_t k = 0; k <= m; ++k) s.tau_[k] = std::ldexp(lo, static_cast<int>(k));  // exact doubling
    s.params_.t_low = lo;
    s.params_.t_high = s.tau_.back();

    if (p.mode == ScheduleMode::Manual) {
        auto bad_len = [m](const std::vector<std::size_t>& v) { return !v.empty() && v.size() != 1 && v.size() != m; };
        if (bad_len(p.upsilon))
            throw Error(ErrorCode::InvalidParams, "upsilon list length must be 1 or m = " + std::to_string(m));
        if (bad_len(p.widths))
            throw Error(ErrorCode::InvalidParams, "widths list length must be 1 or m = " + std::to_string(m));
    }
    auto pick = [](const std::vector<std::size_t>& v, std::size_t k) { return v.size() == 1 ? v[0] : v.at(k); };
    for (std::size_t k = 0; k < m; ++k) {
        const double tk = s.tau_[k];
        const bool manual = p.mode == ScheduleMode::Manual;
        std::size_t ups = manual && !p.upsilon.empty() ? pick(p.upsilon, k) : upsilon_formula(tk, p.n, p.beta, p.d);
        if (ups < 1) throw Error(ErrorCode::InvalidParams, "upsilon must be at least 1");
        s.upsilon_.push_back(ups);
        IntervalArch a = arch_formula(p, tk);
        if (manual && !p.widths.empty()) a.width = pick(p.widths, k);
        s.arch_.push_back(a);
    }
    s.finalize();
    return s;
}

}  // namespace sgm
