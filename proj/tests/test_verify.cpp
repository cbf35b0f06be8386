// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "sgm/oracle_checks.hpp"
#include "sgm/suite.hpp"
#include "sgm/trainer.hpp"
#include "sgm/verify.hpp"

using namespace sgm;

namespace {

const ScoreField kZero = [](double, std::span<const double>, std::span<double> o) { std::fill(o.begin(), o.end(), 0.0); };

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// ∫|p − p̃| for isotropic N(0, I) vs N(0, s²I) in d dims by radial quadrature.
double radial_l1(std::size_t d, double s) {
    const double dd = double(d);
    // surface area of the unit sphere
    const double area = 2.0 * std::pow(std::numbers::pi, dd / 2.0) / std::tgamma(dd / 2.0);
    auto dens = [&](double r, double sc) {
        return std::exp(-0.5 * r * r / (sc * sc)) / std::pow(2.0 * std::numbers::pi * sc * sc, dd / 2.0);
    };
    const std::size_t n = 400000;
    const double hi = 12.0 * std::max(1.0, s), h = hi / double(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (double(i) + 0.5) * h;
        total += area * std::pow(r, dd - 1.0) * std::abs(dens(r, 1.0) - dens(r, s)) * h;
    }
    return total;
}

}  // namespace

TEST(Denoising, IdenticalCandidatesGiveZeroGap) {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    const auto rep = check_denoising_trick(o, 0.3, kZero, kZero, 1000, Rng(1));
    EXPECT_EQ(rep.gap, 0.0);
    EXPECT_EQ(rep.delta1, rep.delta2);
    EXPECT_TRUE(rep.pass);
    EXPECT_THROW((void)check_denoising_trick(o, 0.0, kZero, kZero, 10, Rng(1)), Error);
}

TEST(Denoising, StationaryOracleVsZeroMap) {
    const ScoreOracle o(presets::isotropic_gaussian(3, 1.0), ForwardSpec{});
    const auto rep = check_denoising_trick(o, 0.5, as_score_fn(o), kZero, 100000, Rng(2));
    EXPECT_TRUE(rep.pass) << rep.gap << " ± " << rep.std_error;
    EXPECT_GT(rep.std_error, 0.0);
}

TEST(Denoising, BenchmarkCandidatesAcrossTimes) {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    const ScoreField half = [](double, std::span<const double> y, std::span<double> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = -0.5 * y[i];
    };
    for (double t : {0.05, 0.5, 2.0}) {
        const auto rep = check_denoising_trick(o, t, half, stationary_score_fn(1.0), 50000, Rng(3).substream(static_cast<std::uint64_t>(1000.0 * t)));
        EXPECT_TRUE(rep.pass) << "t=" << t << " gap " << rep.gap << " ± " << rep.std_error;
    }
}

TEST(Denoising, StdErrorShrinksAsRootN) {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    double prev = 0.0;
    for (std::size_t n : {1000u, 10000u, 100000u}) {
        const double se = check_denoising_trick(o, 0.4, as_score_fn(o), kZero, n, Rng(4)).std_error;
        if (prev > 0.0) {
            const double ratio = prev / se;
            EXPECT_GT(ratio, std::sqrt(10.0) / 1.5) << n;
            EXPECT_LT(ratio, std::sqrt(10.0) * 1.5) << n;
        }
        prev = se;
    }
}

TEST(Reversal, StationaryTargetAnyProfile) {
    const ScoreOracle o(presets::isotropic_gaussian(3, 1.0), ForwardSpec{});
    for (const auto& prof : {DiffusionProfile::ode(), DiffusionProfile::ddpm(), DiffusionProfile::alternating(0.5, 1.0)}) {
        ReversalOptions opt;
        opt.start_exact = false;
        const auto rep = check_marginal_reversal(o, prof, 0.01, 3.0, 128, 4000, Rng(5), opt);
        EXPECT_TRUE(rep.pass) << prof.name();
        ASSERT_EQ(rep.checkpoints.size(), 3u);
        EXPECT_EQ(rep.ensembles.size(), 3u);
        EXPECT_NEAR(rep.checkpoints.back().forward_time, 0.01, 1e-12);
    }
}

TEST(Reversal, SingleGaussianCheckpointMoments) {
    const MixtureTarget target = reversal_gaussian();
    const ForwardSpec spec;
    const ScoreOracle o(target, spec);
    const std::size_t n = 20000, d = target.dim();
    const auto rep = check_marginal_reversal(o, DiffusionProfile::ddpm(), 0.01, 4.0, 1024, n, Rng(6));
    EXPECT_TRUE(rep.pass);
    for (std::size_t c = 0; c < rep.checkpoints.size(); ++c) {
        const auto marg = marginal_at(target, spec, rep.checkpoints[c].forward_time).mixture;
        const Vector mu = marg.mean();
        const Matrix cov = marg.covariance();
        const auto& ens = rep.ensembles[c];
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0, v = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += ens(i, j) / double(n);
            for (std::size_t i = 0; i < n; ++i) v += (ens(i, j) - m) * (ens(i, j) - m) / double(n - 1);
            EXPECT_NEAR(m, mu[j], 3.0 * std::sqrt(cov(j, j) / double(n)) + 5e-3) << "checkpoint " << c;
            EXPECT_NEAR(v, cov(j, j), 3.0 * cov(j, j) * std::sqrt(2.0 / double(n)) + 5e-3) << "checkpoint " << c;
        }
    }
}

TEST(GammaP, ClosedForms) {
    for (double x : {0.01, 0.5, 1.0, 3.0, 10.0, 40.0}) {
        EXPECT_NEAR(regularized_gamma_p(1.0, x), -std::expm1(-x), 1e-14) << x;
        EXPECT_NEAR(regularized_gamma_p(0.5, x), std::erf(std::sqrt(x)), 1e-13) << x;
        const double chi3 = std::erf(std::sqrt(x)) - 2.0 * std::sqrt(x / std::numbers::pi) * std::exp(-x);
        EXPECT_NEAR(regularized_gamma_p(1.5, x), chi3, 1e-13) << x;
    }
    EXPECT_EQ(regularized_gamma_p(2.0, 0.0), 0.0);
}

TEST(GaussianPair, MeanShiftL1MatchesQuadrature) {
    for (double delta : {0.05, 0.5, 2.0}) {
        const GaussianPair p{GaussianPair::Kind::MeanShift, 3, delta};
        // reduces to one dimension along e₁
        double q = 0.0;
        const double h = 1e-4;
        for (double x = -15.0; x < 15.0 + delta; x += h) q += std::abs(phi(x) - phi(x - delta)) * h;
        EXPECT_NEAR(p.l1_distance(), q, 1e-6) << delta;
    }
    EXPECT_EQ((GaussianPair{GaussianPair::Kind::MeanShift, 3, 0.0}.l1_distance()), 0.0);
}

TEST(GaussianPair, VarianceScaleL1MatchesQuadrature) {
    for (std::size_t d : {1u, 3u}) {
        for (double s : {0.7, 1.3, 2.0}) {
            const GaussianPair p{GaussianPair::Kind::VarianceScale, d, s};
            EXPECT_NEAR(p.l1_distance(), radial_l1(d, s), 1e-6) << "d=" << d << " s=" << s;
        }
    }
    EXPECT_EQ((GaussianPair{GaussianPair::Kind::VarianceScale, 3, 1.0}.l1_distance()), 0.0);
}

TEST(GaussianPair, CouplingPushesFirstOntoSecond) {
    const GaussianPair p{GaussianPair::Kind::VarianceScale, 2, 1.5};
    const Vector x{1.0, -2.0};
    Vector y(2);
    p.couple(x, y);
    EXPECT_EQ(y, (Vector{1.5, -3.0}));
    const GaussianPair m{GaussianPair::Kind::MeanShift, 2, 0.3};
    m.couple(x, y);
    EXPECT_EQ(y, (Vector{1.3, -2.0}));
    EXPECT_GT(p.subgaussian_l(), 0.0);
}

TEST(StabilityInitial, IdenticalInitials) {
    const GaussianPair p{GaussianPair::Kind::MeanShift, 3, 0.0};
    const auto rep = check_stability_initial(p, zero_drift_sde(1.0, 1.0, 50), 0.0, Rng(7));
    EXPECT_EQ(rep.lhs, 0.0);
    EXPECT_GT(rep.rhs, 0.0);
    EXPECT_TRUE(rep.pass);
}

TEST(StabilityInitial, MeanShiftHoldsWithSlackAndScales) {
    const SdeSpec sde = zero_drift_sde(2.0, 2.0, 50);
    StabilityInitialOptions opt;
    opt.n_paths = 512;
    const auto a = check_stability_initial({GaussianPair::Kind::MeanShift, 3, 0.1}, sde, 0.0, Rng(8), opt);
    const auto b = check_stability_initial({GaussianPair::Kind::MeanShift, 3, 0.2}, sde, 0.0, Rng(8), opt);
    EXPECT_TRUE(a.pass);
    EXPECT_GE(a.slack, 10.0);
    // the synchronous coupling moves every path by exactly δ
    EXPECT_NEAR(a.lhs, 0.1, 1e-12);
    EXPECT_NEAR(b.lhs / a.lhs, 2.0, 1e-9);
    const double rhs_ratio = b.rhs / a.rhs;
    EXPECT_GT(rhs_ratio, 1.0);
    EXPECT_LT(rhs_ratio, 2.0 * 2.0);
    EXPECT_LT(a.slack / b.slack, 2.0);
    EXPECT_GT(a.slack / b.slack, 0.5);
}

TEST(StabilityDrift, IdenticalDriftsGiveZero) {
    SdeSpec sde;
    sde.g = kZero;
    sde.theta = 1.0;
    sde.r = std::numbers::sqrt2;
    sde.tau_hi = 2.0;
    sde.n_steps = 40;
    Matrix init(256, 3);
    Rng r(9);
    for (double& v : init.data()) v = r.normal();
    const auto rep = check_stability_drift(sde, kZero, [](double) { return -1.0; }, init, Rng(10));
    EXPECT_EQ(rep.lhs, 0.0);
    EXPECT_EQ(rep.rhs, 0.0);
    EXPECT_TRUE(rep.pass);
}

TEST(StabilityDrift, LinearDriftAnalyticGap) {
    const double eps = 0.05, span = 2.0;
    SdeSpec sde;
    sde.g = kZero;
    sde.theta = 1.0;
    sde.r = std::numbers::sqrt2;
    sde.tau_hi = span;
    sde.n_steps = 200;
    const DriftField bumped = [eps](double, std::span<const double>, std::span<double> o) {
        std::fill(o.begin(), o.end(), 0.0);
        o[0] = eps;
    };
    Matrix init(512, 3);
    Rng r(11);
    for (double& v : init.data()) v = r.normal();
    const double exact = eps * -std::expm1(-span);
    const auto contract = check_stability_drift(sde, bumped, [](double) { return -1.0; }, init, Rng(12));
    EXPECT_NEAR(contract.lhs, exact, 1e-12);
    EXPECT_NEAR(contract.rhs, exact, 1e-12);
    EXPECT_TRUE(contract.pass);
    const auto flat = check_stability_drift(sde, bumped, [](double) { return 0.0; }, init, Rng(12));
    EXPECT_NEAR(flat.rhs, eps * span, 1e-12);
    EXPECT_TRUE(flat.pass);
    EXPECT_GT(flat.slack, 1.0);
}

TEST(StabilityDrift, PerturbedOracleHolds) {
    const auto rep = oracle_drift_stability(Rng(13), 256);
    EXPECT_TRUE(rep.pass) << rep.lhs << " vs " << rep.rhs;
    EXPECT_GE(rep.slack, 1.0);
}

TEST(LambdaEnvelope, BracketLookup) {
    const LambdaEnvelope env({0.1, 1.0, 10.0}, {3.0, 1.0, 0.5});
    EXPECT_EQ(env(0.01), 3.0);
    EXPECT_EQ(env(0.5), 3.0);
    EXPECT_EQ(env(5.0), 1.0);
    EXPECT_EQ(env(100.0), 0.5);
}

TEST(OracleChecks, GridHelpers) {
    const Matrix g = ball_grid(2, 1.0, 3);
    EXPECT_EQ(g.rows(), 5u);
    for (std::size_t i = 0; i < g.rows(); ++i) EXPECT_LE(norm(g.row(i)), 1.0 + 1e-12);
    EXPECT_EQ(ball_grid(3, 2.0, 1).rows(), 1u);
    const Vector t = geometric_times(1e-3, 10.0, 5);
    EXPECT_EQ(t.front(), 1e-3);
    EXPECT_NEAR(t.back(), 10.0, 1e-12);
    EXPECT_NEAR(t[2], 0.1, 1e-15);
    const Vector x{0.0, 1.0, 3.0}, y{1.0, 3.0, 7.0};
    EXPECT_DOUBLE_EQ(trapezoid(x, y), 2.0 + 10.0);
}

TEST(OracleChecks, PropertyAOnBenchmark) {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    const auto rep = check_property_A(o, geometric_times(1e-3, 10.0, 12), ball_grid(3, 10.0, 7), frozen::kPropertyA);
    EXPECT_TRUE(rep.pass) << rep.max_ratio;
    EXPECT_GT(rep.max_ratio, 0.0);
}

TEST(OracleChecks, PropertyBStationaryAndBenchmark) {
    const ScoreOracle st(presets::isotropic_gaussian(3, 1.0), ForwardSpec{});
    const Vector times = geometric_times(1e-3, 10.0, 8);
    const Matrix xs = ball_grid(3, 3.0, 5);
    for (double v : check_property_B(st, times, xs, 1.0).sup_lambda) EXPECT_NEAR(v, 0.0, 1e-12);
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    const auto rep = check_property_B(o, times, xs, 1.0, frozen::kPropertyB);
    EXPECT_TRUE(rep.pass);
    EXPECT_TRUE(std::isfinite(rep.integral));
    EXPECT_LE(rep.fitted_constant, frozen::kPropertyB);
    // decays like e^{-2t} for large t
    EXPECT_LT(rep.sup_lambda.back(), 1e-6);
}

TEST(OracleChecks, PropertiesCDOnBenchmark) {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    const std::vector<TimePair> pairs{{1.0, 1.1}, {0.1, 0.11}, {0.5, 0.55}, {2.0, 2.2}};
    const Vector gt{0.1, 0.5, 1.0, 2.0, 5.0};
    const auto rep = check_properties_CD(o, pairs, gt, 1.0, 0.01, 7, Rng(14), frozen::kPropertyC, frozen::kPropertyD);
    EXPECT_TRUE(rep.pass) << rep.to_json().dump();
    EXPECT_EQ(rep.time_normalized.size(), 4u);
    const ScoreOracle st(presets::isotropic_gaussian(3, 1.0), ForwardSpec{});
    Rng r(15);
    for (int k = 0; k < 20; ++k) {
        const Vector x{r.normal(), r.normal(), r.normal()};
        for (double v : stationary_residual(st, r.uniform(0.01, 5.0), x)) EXPECT_NEAR(v, 0.0, 1e-14);
    }
}
