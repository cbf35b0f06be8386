// SPDX-License-Identifier: Apache-2.0
//
// Closed-form forward marginals, scores and score Jacobians for mixture
// targets. Each component N(μ_l, Σ_l) is pushed forward to
// N(e^{-t}μ_l, e^{-2t}Σ_l + σ_t² I); with Σ_l = Q Λ Qᵀ cached once, every
// marginal covariance is diagonal in the same basis, so a score evaluation
// costs O(L d²) with no factorization.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "sgm/forward.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/targets.hpp"

namespace sgm {

/// The forward marginal p_t of a mixture target: again a mixture.
struct MarginalMixture {
    double t = 0.0;
    MixtureTarget mixture;
};

inline MarginalMixture marginal_at(const MixtureTarget& target, const ForwardSpec& spec, double t) {
    if (t < 0.0) throw Error(ErrorCode::OutOfRange, "negative time");
    const double decay = std::exp(-t);
    const double s2 = sigma_t(spec, t) * sigma_t(spec, t);
    std::vector<GaussianComponent> comps;
    comps.reserve(target.size());
    for (const auto& c : target.components()) {
        GaussianComponent g;
        g.weight = c.weight;
        g.mean = c.mean;
        for (double& m : g.mean) m *= decay;
        g.covariance = (decay * decay) * c.covariance;
        for (std::size_t i = 0; i < target.dim(); ++i) g.covariance(i, i) += s2;
        comps.push_back(std::move(g));
    }
    return {t, MixtureTarget(std::move(comps))};
}

/// Ground-truth score s*(t, x) = ∇ log p_t(x) for a mixture target.
/// Immutable and thread-safe; satisfies the score-field call signature
/// `f(t, x, out)` used by the sampler, trainer and verifier.
class ScoreOracle {
public:
    ScoreOracle(MixtureTarget target, ForwardSpec spec) : target_(std::move(target)), spec_(std::move(spec)) {
        for (const auto& c : target_.components()) eig_.push_back(jacobi_eigen(c.covariance));
    }

    [[nodiscard]] const MixtureTarget& target() const noexcept { return target_; }
    [[nodiscard]] const ForwardSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] std::size_t dim() const noexcept { return target_.dim(); }

    void operator()(double t, std::span<const double> x, std::span<double> out) const { score(t, x, out); }

    void score(double t, std::span<const double> x, std::span<double> out) const {
        Workspace& ws = scratch(dim(), target_.size());
        evaluate(t, x, ws);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t l = 0; l < target_.size(); ++l)
            for (std::size_t i = 0; i < dim(); ++i) out[i] += ws.w[l] * ws.m(l, i);
    }

    [[nodiscard]] Vector score(double t, std::span<const double> x) const {
        Vector out(dim());
        score(t, x, out);
        return out;
    }

    [[nodiscard]] double log_density(double t, std::span<const double> x) const {
        return evaluate(t, x, scratch(dim(), target_.size()));
    }

    /// ∇s*(t,x) = Σ_l w_l(−Σ̃_l⁻¹ + m_l m_lᵀ) − m̄ m̄ᵀ, m_l = Σ̃_l⁻¹(e^{-t}μ_l − x).
    [[nodiscard]] Matrix jacobian(double t, std::span<const double> x) const {
        const std::size_t d = dim();
        Workspace& ws = scratch(d, target_.size());
        evaluate(t, x, ws);
        Matrix h(d, d);
        Vector mbar(d, 0.0);
        for (std::size_t l = 0; l < target_.size(); ++l) {
            const double w = ws.w[l];
            const auto& e = eig_[l];
            for (std::size_t i = 0; i < d; ++i) {
                mbar[i] += w * ws.m(l, i);
                for (std::size_t j = 0; j < d; ++j) {
                    double prec = 0.0;  // (Q D⁻¹ Qᵀ)_{ij}
                    for (std::size_t k = 0; k < d; ++k) prec += e.vectors(i, k) * e.vectors(j, k) / ws.diag(l, k);
                    h(i, j) += w * (ws.m(l, i) * ws.m(l, j) - prec);
                }
            }
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) h(i, j) -= mbar[i] * mbar[j];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) h(i, j) = h(j, i) = 0.5 * (h(i, j) + h(j, i));
        return h;
    }

    [[nodiscard]] MarginalMixture marginal(double t) const { return marginal_at(target_, spec_, t); }

private:
    struct Workspace {
        Vector w;     // responsibilities
        Matrix m;     // rows m_l
        Matrix diag;  // rows: e^{-2t}λ + σ_t²
        Vector y;
    };

    /// Per-thread scratch so hot loops (sampling, Fisher loss) do not allocate.
    static Workspace& scratch(std::size_t d, std::size_t l) {
        thread_local Workspace ws;
        if (ws.y.size() != d || ws.w.size() != l) {
            ws.w.assign(l, 0.0);
            ws.m = Matrix(l, d);
            ws.diag = Matrix(l, d);
            ws.y.assign(d, 0.0);
        }
        return ws;
    }

    /// Fills responsibilities and m_l; returns log p_t(x).
    double evaluate(double t, std::span<const double> x, Workspace& ws) const {
        if (t < 0.0) throw Error(ErrorCode::OutOfRange, "negative time");
        if (x.size() != dim()) throw Error(ErrorCode::SizeMismatch, "point dimension does not match target");
        const std::size_t d = dim();
        const double decay = std::exp(-t);
        const double st = sigma_t(spec_, t);
        const double s2 = st * st;
        const double log2pi = std::log(2.0 * std::numbers::pi);
        for (std::size_t l = 0; l < target_.size(); ++l) {
            const auto& c = target_.component(l);
            const auto& e = eig_[l];
            double quad = 0.0, logdet = 0.0;
            // y = Qᵀ(e^{-t}μ − x), scaled by the diagonal marginal covariance.
            for (std::size_t k = 0; k < d; ++k) {
                double yk = 0.0;
                for (std::size_t i = 0; i < d; ++i) yk += e.vectors(i, k) * (decay * c.mean[i] - x[i]);
                const double dk = decay * decay * e.values[k] + s2;
                ws.diag(l, k) = dk;
                quad += yk * yk / dk;
                logdet += std::log(dk);
                ws.y[k] = yk / dk;
            }
            for (std::size_t i = 0; i < d; ++i) {
                double mi = 0.0;
                for (std::size_t k = 0; k < d; ++k) mi += e.vectors(i, k) * ws.y[k];
                ws.m(l, i) = mi;
            }
            ws.w[l] = std::log(c.weight) - 0.5 * (static_cast<double>(d) * log2pi + logdet + quad);
        }
        const double lse = MixtureTarget::log_sum_exp(ws.w);
        for (double& w : ws.w) w = std::exp(w - lse);
        return lse;
    }

    MixtureTarget target_;
    ForwardSpec spec_;
    std::vector<SymmetricEigen> eig_;
};

/// Stationary score −x/σ², the t → ∞ limit and the untrained-model baseline.
struct StationaryScore {
    double sigma = 1.0;
    void operator()(double, std::span<const double> x, std::span<double> out) const {
        const double inv = 1.0 / (sigma * sigma);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -x[i] * inv;
    }
};

}  // namespace sgm
