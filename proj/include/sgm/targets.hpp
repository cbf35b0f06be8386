// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-mixture target densities: exact log-density, gradient, Hessian
// and i.i.d. sampling. Mixtures are closed under the forward noising process,
// which is what makes them usable as ground truth elsewhere in the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sgm/error.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"

namespace sgm {

struct GaussianComponent {
    double weight = 1.0;
    Vector mean;
    Matrix covariance;
};

class MixtureTarget {
public:
    MixtureTarget() = default;

    /// Validates weights (positive, summing to 1 within 1e-9) and factorizes
    /// every covariance. When `bound_a > 0` the model-class conditions
    /// ‖μ_l‖ ≤ A and spec(Σ_l) ⊂ [1/A, A] are enforced too.
    explicit MixtureTarget(std::vector<GaussianComponent> components, double bound_a = 0.0)
        : components_(std::move(components)) {
        if (components_.empty()) throw Error(ErrorCode::InvalidParams, "mixture needs at least one component");
        d_ = components_.front().mean.size();
        if (d_ == 0) throw Error(ErrorCode::InvalidParams, "dimension must be at least 1");
        double total = 0.0;
        for (const auto& c : components_) {
            if (c.mean.size() != d_ || c.covariance.rows() != d_ || c.covariance.cols() != d_)
                throw Error(ErrorCode::SizeMismatch, "component shapes disagree");
            if (!(c.weight > 0.0)) throw Error(ErrorCode::InvalidParams, "component weights must be positive");
            if (max_asymmetry(c.covariance) > 1e-12 * std::max(1.0, inf_norm(c.covariance)))
                throw Error(ErrorCode::InvalidParams, "covariance must be symmetric");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidParams, "weights must sum to 1");

        cholesky_.reserve(components_.size());
        for (const auto& c : components_) {
            cholesky_.push_back(cholesky(c.covariance));
            precision_.push_back(cholesky_inverse(cholesky_.back()));
            log_norm_.push_back(std::log(c.weight) -
                                0.5 * (static_cast<double>(d_) * std::log(2.0 * std::numbers::pi) +
                                       cholesky_log_det(cholesky_.back())));
        }
        if (bound_a > 0.0) {
            const double needed = model_constant();
            if (needed > bound_a)
                throw Error(ErrorCode::InvalidParams, "mixture violates the mean-ball / covariance bound A");
        }
    }

    [[nodiscard]] std::size_t dim() const noexcept { return d_; }
    [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
    [[nodiscard]] const GaussianComponent& component(std::size_t l) const { return components_[l]; }
    [[nodiscard]] const std::vector<GaussianComponent>& components() const noexcept { return components_; }
    [[nodiscard]] const Matrix& cholesky_factor(std::size_t l) const { return cholesky_[l]; }
    [[nodiscard]] const Matrix& precision(std::size_t l) const { return precision_[l]; }

    /// Smallest A ≥ 1 with ‖μ_l‖ ≤ A and A⁻¹I ⪯ Σ_l⁻¹ ⪯ AI for every component.
    [[nodiscard]] double model_constant() const {
        double a = 1.0;
        for (const auto& c : components_) {
            const Vector ev = jacobi_eigenvalues(c.covariance);
            a = std::max({a, norm(c.mean), ev.back(), 1.0 / ev.front()});
        }
        return a;
    }

    /// Per-component log(α_l N(x; μ_l, Σ_l)); `scratch` must have size d.
    void component_log_terms(std::span<const double> x, std::span<double> out, std::span<double> scratch) const {
        for (std::size_t l = 0; l < components_.size(); ++l) {
            const auto& mu = components_[l].mean;
            for (std::size_t i = 0; i < d_; ++i) scratch[i] = x[i] - mu[i];
            solve_lower_inplace(cholesky_[l], scratch);
            out[l] = log_norm_[l] - 0.5 * dot(scratch, scratch);
        }
    }

    [[nodiscard]] double log_density(std::span<const double> x) const {
        check_dim(x);
        Vector terms(components_.size()), scratch(d_);
        component_log_terms(x, terms, scratch);
        return log_sum_exp(terms);
    }

    /// Posterior responsibilities w_l(x), computed in log space.
    [[nodiscard]] Vector responsibilities(std::span<const double> x) const {
        check_dim(x);
        Vector terms(components_.size()), scratch(d_);
        component_log_terms(x, terms, scratch);
        const double lse = log_sum_exp(terms);
        for (double& t : terms) t = std::exp(t - lse);
        return terms;
    }

    /// ∇ log p(x) = Σ_l w_l(x) Σ_l⁻¹(μ_l − x).
    void grad_log_density(std::span<const double> x, std::span<double> out) const {
        const Vector w = responsibilities(x);
        std::fill(out.begin(), out.end(), 0.0);
        Vector m(d_);
        for (std::size_t l = 0; l < components_.size(); ++l) {
            precision_times_offset(l, x, m);
            for (std::size_t i = 0; i < d_; ++i) out[i] += w[l] * m[i];
        }
    }

    [[nodiscard]] Vector grad_log_density(std::span<const double> x) const {
        Vector g(d_);
        grad_log_density(x, g);
        return g;
    }

    /// ∇² log p(x) = Σ_l w_l(−Σ_l⁻¹ + m_l m_lᵀ) − m̄ m̄ᵀ with m_l = Σ_l⁻¹(μ_l − x)
    /// and m̄ = Σ_l w_l m_l. Symmetric by construction.
    [[nodiscard]] Matrix hessian_log_density(std::span<const double> x) const {
        const Vector w = responsibilities(x);
        Matrix h(d_, d_);
        Vector mbar(d_, 0.0), m(d_);
        for (std::size_t l = 0; l < components_.size(); ++l) {
            precision_times_offset(l, x, m);
            const Matrix& p = precision_[l];
            for (std::size_t i = 0; i < d_; ++i) {
                mbar[i] += w[l] * m[i];
                for (std::size_t j = 0; j < d_; ++j) h(i, j) += w[l] * (m[i] * m[j] - p(i, j));
            }
        }
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) h(i, j) -= mbar[i] * mbar[j];
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = i + 1; j < d_; ++j) h(i, j) = h(j, i) = 0.5 * (h(i, j) + h(j, i));
        return h;
    }

    /// One draw: component index from the weights, then μ_l + L_l z.
    void sample_one(Rng& rng, std::span<double> out) const {
        const double u = rng.uniform();
        std::size_t l = 0;
        double acc = components_[0].weight;
        while (l + 1 < components_.size() && u > acc) acc += components_[++l].weight;
        Vector z(d_);
        rng.fill_normal(z);
        const Matrix& chol = cholesky_[l];
        const auto& mu = components_[l].mean;
        for (std::size_t i = 0; i < d_; ++i) {
            double s = mu[i];
            for (std::size_t k = 0; k <= i; ++k) s += chol(i, k) * z[k];
            out[i] = s;
        }
    }

    /// n i.i.d. draws as rows; row i uses substream i, so sample sets drawn with
    /// the same rng are nested (the first n rows do not depend on the total).
    [[nodiscard]] Matrix sample(const Rng& rng, std::size_t n) const {
        Matrix out(n, d_);
        parallel_for(n, [&](std::size_t i) {
            Rng sub = rng.substream(i);
            sample_one(sub, out.row(i));
        });
        return out;
    }

    /// Componentwise mean and covariance of the whole mixture.
    [[nodiscard]] Vector mean() const {
        Vector m(d_, 0.0);
        for (const auto& c : components_)
            for (std::size_t i = 0; i < d_; ++i) m[i] += c.weight * c.mean[i];
        return m;
    }

    [[nodiscard]] Matrix covariance() const {
        const Vector m = mean();
        Matrix cov(d_, d_);
        for (const auto& c : components_)
            for (std::size_t i = 0; i < d_; ++i)
                for (std::size_t j = 0; j < d_; ++j)
                    cov(i, j) += c.weight * (c.covariance(i, j) + (c.mean[i] - m[i]) * (c.mean[j] - m[j]));
        return cov;
    }

    static double log_sum_exp(std::span<const double> terms) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double t : terms) mx = std::max(mx, t);
        if (!std::isfinite(mx)) return mx;
        double s = 0.0;
        for (double t : terms) s += std::exp(t - mx);
        return mx + std::log(s);
    }

private:
    void check_dim(std::span<const double> x) const {
        if (x.size() != d_) throw Error(ErrorCode::SizeMismatch, "point dimension does not match target");
    }

    void precision_times_offset(std::size_t l, std::span<const double> x, std::span<double> out) const {
        const auto& mu = components_[l].mean;
        for (std::size_t i = 0; i < d_; ++i) out[i] = mu[i] - x[i];
        cholesky_solve_inplace(cholesky_[l], out);
    }

    std::size_t d_ = 0;
    std::vector<GaussianComponent> components_;
    std::vector<Matrix> cholesky_;
    std::vector<Matrix> precision_;
    std::vector<double> log_norm_;
};

/// Sub-Gaussian tail certificate: P(‖Y‖ ≥ √(κ log(1/ε))) ≤ ε.
///
/// For a mixture, ‖Y‖ ≤ max_l ‖μ_l‖ + √λ_max ‖Z‖ and the chi tail gives
/// P(‖Z‖ ≥ √d + √(2u)) ≤ e^{-u}. Matching √(κu) against that radius is only
/// possible for u bounded away from 0, so the certificate covers ε ≤ 1/2.
struct SubGaussianCert {
    double kappa = 0.0;
    double eps_max = 0.5;

    static SubGaussianCert for_mixture(const MixtureTarget& target) {
        double mean_radius = 0.0, lam = 0.0;
        for (const auto& c : target.components()) {
            mean_radius = std::max(mean_radius, norm(c.mean));
            lam = std::max(lam, jacobi_eigenvalues(c.covariance).back());
        }
        const double u0 = std::log(2.0);
        const double radius = mean_radius + std::sqrt(lam) * (std::sqrt(static_cast<double>(target.dim())) + std::sqrt(2.0 * u0));
        return {radius * radius / u0, 0.5};
    }

    [[nodiscard]] double radius(double eps) const { return std::sqrt(kappa * std::log(1.0 / eps)); }

    /// Empirical exceedance fraction P̂(‖Y‖ ≥ radius(ε)).
    [[nodiscard]] double tail_fraction(const Matrix& samples, double eps) const {
        const double r = radius(eps);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < samples.rows(); ++i)
            if (norm(samples.row(i)) >= r) ++hits;
        return samples.rows() ? static_cast<double>(hits) / static_cast<double>(samples.rows()) : 0.0;
    }

    /// The empirical tail check: exceedance ≤ 2ε for ε ∈ {0.1, 0.01}.
    [[nodiscard]] bool tail_check(const Matrix& samples) const {
        return tail_fraction(samples, 0.1) <= 0.2 && tail_fraction(samples, 0.01) <= 0.02;
    }
};

/// Convenience constructors for the targets used throughout tests and configs.
namespace presets {

inline MixtureTarget isotropic_gaussian(std::size_t d, double variance, Vector mean = {}) {
    if (mean.empty()) mean.assign(d, 0.0);
    return MixtureTarget({{1.0, std::move(mean), variance * Matrix::identity(d)}});
}

/// Two equal-weight components at ±offset·e₁ with isotropic variance.
inline MixtureTarget two_gaussian(std::size_t d, double offset = 1.5, double variance = 0.25) {
    Vector plus(d, 0.0), minus(d, 0.0);
    plus[0] = offset;
    minus[0] = -offset;
    return MixtureTarget({{0.5, plus, variance * Matrix::identity(d)}, {0.5, minus, variance * Matrix::identity(d)}});
}

}  // namespace presets

}  // namespace sgm
