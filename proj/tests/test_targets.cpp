// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "sgm/targets.hpp"

using namespace sgm;

namespace {

MixtureTarget three_component() {
    return MixtureTarget({{0.2, Vector{1.0, 0.0, -1.0}, Matrix{{1.0, 0.3, 0.0}, {0.3, 0.8, 0.1}, {0.0, 0.1, 0.5}}},
                          {0.5, Vector{-1.0, 0.5, 0.0}, Matrix{{0.4, 0.0, 0.0}, {0.0, 0.6, -0.2}, {0.0, -0.2, 0.7}}},
                          {0.3, Vector{0.0, -1.5, 1.0}, 0.9 * Matrix::identity(3)}});
}

MixtureTarget random_mixture(Rng& rng, std::size_t d, std::size_t comps) {
    std::vector<GaussianComponent> cs;
    double total = 0.0;
    std::vector<double> w(comps);
    for (double& v : w) total += (v = 0.2 + rng.uniform());
    for (std::size_t l = 0; l < comps; ++l) {
        Vector mu(d);
        for (double& v : mu) v = rng.uniform(-2.0, 2.0);
        Matrix b(d, d);
        for (double& v : b.data()) v = 0.5 * rng.normal();
        cs.push_back({w[l] / total, mu, b * b.transpose() + 0.3 * Matrix::identity(d)});
    }
    return MixtureTarget(std::move(cs));
}

// Plain density sum without log-space tricks.
double direct_log_density(const MixtureTarget& t, std::span<const double> x) {
    const std::size_t d = t.dim();
    double p = 0.0;
    for (const auto& c : t.components()) {
        const Matrix l = cholesky(c.covariance);
        Vector r(d);
        for (std::size_t i = 0; i < d; ++i) r[i] = x[i] - c.mean[i];
        const Matrix inv = cholesky_inverse(l);
        const Vector ir = inv * std::span<const double>(r);
        double det = 1.0;
        for (std::size_t i = 0; i < d; ++i) det *= l(i, i) * l(i, i);
        p += c.weight * std::exp(-0.5 * dot(r, ir)) / std::sqrt(std::pow(2.0 * std::numbers::pi, double(d)) * det);
    }
    return std::log(p);
}

}  // namespace

TEST(Targets, StandardNormalAtOrigin) {
    const auto t = presets::isotropic_gaussian(2, 1.0);
    EXPECT_NEAR(t.log_density(Vector{0.0, 0.0}), -std::log(2.0 * std::numbers::pi), 1e-14);
    EXPECT_NEAR(t.log_density(Vector{0.0, 0.0}), -1.8378770664, 1e-10);
}

TEST(Targets, FarFieldIsFinite) {
    const auto t = three_component();
    for (double r : {1e2, 1e4, 1e6}) {
        const Vector x{r, -r, 0.5 * r};
        EXPECT_TRUE(std::isfinite(t.log_density(x)));
        for (double g : t.grad_log_density(x)) EXPECT_TRUE(std::isfinite(g));
        double total = 0.0;
        for (double w : t.responsibilities(x)) total += w;
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Targets, LogDensityMatchesDirectSum) {
    const auto t = three_component();
    Rng r(1);
    for (int k = 0; k < 200; ++k) {
        Vector x(3);
        for (double& v : x) v = r.uniform(-3.0, 3.0);
        EXPECT_NEAR(t.log_density(x), direct_log_density(t, x), 1e-12);
    }
}

TEST(Targets, SingleGaussianScore) {
    const double s2 = 2.5;
    const auto t = presets::isotropic_gaussian(3, s2);
    const Vector x{0.7, -1.2, 3.0};
    const Vector g = t.grad_log_density(x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], -x[i] / s2, 1e-15);
}

TEST(Targets, SymmetricMixtureScoreVanishesAtOrigin) {
    const auto t = presets::two_gaussian(3);
    for (double g : t.grad_log_density(Vector{0.0, 0.0, 0.0})) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(Targets, GradientMatchesFiniteDifferences) {
    Rng r(2);
    const double h = 1e-5;
    for (int k = 0; k < 200; ++k) {
        const std::size_t d = 1 + r.below(4);
        const auto t = random_mixture(r, d, 1 + r.below(3));
        Vector x(d);
        for (double& v : x) v = r.uniform(-2.5, 2.5);
        const Vector g = t.grad_log_density(x);
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            Vector xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fd = (t.log_density(xp) - t.log_density(xm)) / (2.0 * h);
            err = std::max(err, std::abs(fd - g[i]));
            scale = std::max(scale, std::abs(g[i]));
        }
        EXPECT_LE(err / std::max(scale, 1.0), 1e-5) << "case " << k;
    }
}

TEST(Targets, HessianMatchesFiniteDifferences) {
    const auto t = three_component();
    Rng r(3);
    const double h = 1e-5;
    for (int k = 0; k < 50; ++k) {
        Vector x(3);
        for (double& v : x) v = r.uniform(-2.0, 2.0);
        const Matrix hess = t.hessian_log_density(x);
        for (std::size_t j = 0; j < 3; ++j) {
            Vector xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vector gp = t.grad_log_density(xp), gm = t.grad_log_density(xm);
            for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(hess(i, j), (gp[i] - gm[i]) / (2.0 * h), 1e-6);
        }
    }
}

TEST(Targets, SampleMeanStandardNormal) {
    const auto t = presets::isotropic_gaussian(2, 1.0);
    const Matrix s = t.sample(Rng(4), 100000);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        m0 += s(i, 0);
        m1 += s(i, 1);
    }
    EXPECT_NEAR(m0 / 1e5, 0.0, 0.02);
    EXPECT_NEAR(m1 / 1e5, 0.0, 0.02);
}

TEST(Targets, DegenerateComponentConcentrates) {
    const MixtureTarget t({{1.0, Vector{1.0, 2.0}, 1e-12 * Matrix::identity(2)}});
    const Matrix s = t.sample(Rng(5), 1000);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        EXPECT_NEAR(s(i, 0), 1.0, 1e-4);
        EXPECT_NEAR(s(i, 1), 2.0, 1e-4);
    }
}

TEST(Targets, ComponentFrequencies) {
    const auto t = presets::two_gaussian(3, 3.0, 0.25);
    const Matrix s = t.sample(Rng(6), 100000);
    std::size_t plus = 0;
    for (std::size_t i = 0; i < s.rows(); ++i)
        if (s(i, 0) > 0.0) ++plus;
    EXPECT_NEAR(static_cast<double>(plus) / 1e5, 0.5, 0.01);
}

TEST(Targets, SamplesAreNestedAcrossSizes) {
    const auto t = three_component();
    const Matrix a = t.sample(Rng(7), 50), b = t.sample(Rng(7), 200);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), b(i, j));
}

TEST(Targets, SampleMomentsMatchMixtureMoments) {
    const auto t = three_component();
    const std::size_t n = 200000;
    const Matrix s = t.sample(Rng(8), n);
    const Vector mu = t.mean();
    const Matrix cov = t.covariance();
    for (std::size_t j = 0; j < 3; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += s(i, j);
        m /= double(n);
        EXPECT_NEAR(m, mu[j], 4.0 * std::sqrt(cov(j, j) / double(n)));
    }
}

// ∫p = E_q[p/q] with q a wide Gaussian covering every component.
TEST(Targets, DensityIntegratesToOne) {
    const auto t = three_component();
    const double q_var = 4.0;
    const auto q = presets::isotropic_gaussian(3, q_var);
    const std::size_t n = 200000;
    const Matrix xs = q.sample(Rng(9), n);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = std::exp(t.log_density(xs.row(i)) - q.log_density(xs.row(i)));
        s += w;
        s2 += w * w;
    }
    const double mean = s / double(n);
    const double se = std::sqrt((s2 / double(n) - mean * mean) / double(n));
    EXPECT_LE(std::abs(mean - 1.0), 3.0 * se);
}

TEST(Targets, SubGaussianTailCheck) {
    for (const auto& t : {three_component(), presets::two_gaussian(3), presets::isotropic_gaussian(5, 2.0)}) {
        const auto cert = SubGaussianCert::for_mixture(t);
        EXPECT_GT(cert.kappa, 0.0);
        EXPECT_TRUE(cert.tail_check(t.sample(Rng(10), 100000)));
    }
}

TEST(Targets, ValidationErrors) {
    auto code_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    EXPECT_EQ(code_of([] { MixtureTarget({{0.4, Vector{0.0}, Matrix{{1.0}}}}); }), ErrorCode::InvalidParams);
    EXPECT_EQ(code_of([] { MixtureTarget({{1.0, Vector{0.0, 0.0}, Matrix{{1.0, 2.0}, {2.0, 1.0}}}}); }),
              ErrorCode::NotSPD);
    EXPECT_EQ(code_of([] { MixtureTarget({{1.0, Vector{0.0, 0.0}, Matrix{{1.0}}}}); }), ErrorCode::SizeMismatch);
    EXPECT_EQ(code_of([] { MixtureTarget({{1.0, Vector{10.0}, Matrix{{1.0}}}}, 2.0); }), ErrorCode::InvalidParams);
    EXPECT_NO_THROW(MixtureTarget({{1.0, Vector{1.0}, Matrix{{1.0}}}}, 2.0));
}
