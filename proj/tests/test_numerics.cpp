// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "sgm/numerics/assignment.hpp"
#include "sgm/numerics/hash.hpp"
#include "sgm/numerics/linalg.hpp"
#include "sgm/numerics/parallel.hpp"
#include "sgm/numerics/rng.hpp"

using namespace sgm;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

Matrix random_symmetric(Rng& rng, std::size_t n) {
    Matrix m = random_matrix(rng, n, n);
    return 0.5 * (m + m.transpose());
}

double brute_force_assignment(const Matrix& cost) {
    std::vector<std::size_t> p(cost.rows());
    std::iota(p.begin(), p.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += cost(i, p[i]);
        best = std::min(best, s);
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

}  // namespace

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerVectors) {
    using detail::philox4x32_10;
    EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}),
              (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(philox4x32_10({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}),
              (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
              (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, SameSeedAndStreamRepeat) {
    Rng a(42, 7), b(42, 7);
    EXPECT_EQ(sample_standard_gaussian(a, 3), sample_standard_gaussian(b, 3));
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SubstreamsDifferAndDoNotAdvanceParent) {
    const Rng root(1);
    Rng p = root;
    const std::uint64_t first = Rng(root).next_u64();
    Rng s1 = root.substream(1), s2 = root.substream(2), s12 = root.substream(1, 2), s21 = root.substream(2, 1);
    EXPECT_NE(s1.stream_id(), s2.stream_id());
    EXPECT_NE(s12.stream_id(), s21.stream_id());
    EXPECT_EQ(root.substream(3, 4).stream_id(), root.substream(3, 4).stream_id());
    EXPECT_EQ(p.next_u64(), first);
}

TEST(Rng, DistinctStreamsAreUncorrelated) {
    const Rng root(9);
    Rng a = root.substream(0), b = root.substream(1);
    const int n = 100000;
    double sab = 0.0;
    for (int i = 0; i < n; ++i) sab += a.normal() * b.normal();
    EXPECT_LT(std::abs(sab / n), 5.0 / std::sqrt(n));
}

TEST(Rng, UniformRangeAndBelow) {
    Rng r(3);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
    }
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        const auto k = r.below(5);
        ASSERT_LT(k, 5u);
        ++counts[k];
    }
    for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
}

TEST(Rng, GaussianMean1d) {
    Rng r(11);
    const int n = 1000000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.normal();
    EXPECT_LT(std::abs(s / n), 5.0 / std::sqrt(n));
}

TEST(Rng, GaussianCovariance2d) {
    Rng r(12);
    const int n = 100000;
    double s00 = 0, s01 = 0, s11 = 0, m0 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
        const auto z = sample_standard_gaussian(r, 2);
        m0 += z[0];
        m1 += z[1];
        s00 += z[0] * z[0];
        s01 += z[0] * z[1];
        s11 += z[1] * z[1];
    }
    m0 /= n;
    m1 /= n;
    EXPECT_NEAR(s00 / n - m0 * m0, 1.0, 0.02);
    EXPECT_NEAR(s01 / n - m0 * m1, 0.0, 0.02);
    EXPECT_NEAR(s11 / n - m1 * m1, 1.0, 0.02);
}

TEST(Rng, GaussianFourthMoment) {
    Rng r(13);
    const int n = 200000;
    double s4 = 0.0;
    for (int i = 0; i < n; ++i) s4 += std::pow(r.normal(), 4);
    // Var(Z⁴) = 105 − 9 = 96.
    EXPECT_NEAR(s4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(Cholesky, IdentityAndDiagonal) {
    EXPECT_EQ(cholesky(Matrix::identity(3)), Matrix::identity(3));
    const Matrix l = cholesky(Matrix{{4.0, 0.0}, {0.0, 9.0}});
    EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(l(1, 1), 3.0);
    EXPECT_DOUBLE_EQ(l(1, 0), 0.0);
}

TEST(Cholesky, ReconstructsRandomSpd) {
    Rng r(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix b = random_matrix(r, 4, 4);
        const Matrix a = b.transpose() * b + Matrix::identity(4);
        const Matrix l = cholesky(a);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) EXPECT_EQ(l(i, j), 0.0);
        EXPECT_LE(frobenius_norm(l * l.transpose() - a) / frobenius_norm(a), 1e-12);
    }
}

TEST(Cholesky, RejectsNonSpd) {
    try {
        (void)cholesky(Matrix{{1.0, 2.0}, {2.0, 1.0}});
        FAIL() << "expected NotSPD";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotSPD);
    }
}

TEST(Cholesky, SolveInverseLogDet) {
    Rng r(6);
    const Matrix b = random_matrix(r, 3, 3);
    const Matrix a = b.transpose() * b + Matrix::identity(3);
    const Matrix l = cholesky(a);
    Vector x{0.3, -1.0, 2.0};
    const Vector rhs = a * std::span<const double>(x);
    Vector sol = rhs;
    cholesky_solve_inplace(l, sol);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sol[i], x[i], 1e-12);
    EXPECT_LE(frobenius_norm(a * cholesky_inverse(l) - Matrix::identity(3)), 1e-12);
    // det via cofactor expansion
    const double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                       a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                       a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    EXPECT_NEAR(cholesky_log_det(l), std::log(det), 1e-12);
}

TEST(LambdaMax, SimpleCases) {
    EXPECT_NEAR(lambda_max_symmetric(Matrix{{3.0, 0.0}, {0.0, 1.0}}, 1e-12).value, 3.0, 1e-10);
    const auto z = lambda_max_symmetric(Matrix(3, 3), 1e-12);
    EXPECT_EQ(z.value, 0.0);
    EXPECT_TRUE(z.converged);
    EXPECT_NEAR(lambda_max_symmetric(Matrix{{-2.0, 0.0}, {0.0, -5.0}}, 1e-12).value, -2.0, 1e-10);
    EXPECT_THROW((void)lambda_max_symmetric(Matrix::identity(2), 0.0), Error);
}

TEST(LambdaMax, MatchesJacobiOracle) {
    Rng r(7);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix m = random_symmetric(r, 5);
        const auto est = lambda_max_symmetric(m, 1e-10);
        const Vector ev = jacobi_eigenvalues(m);
        EXPECT_NEAR(est.value, ev.back(), 1e-8) << "trial " << trial;
    }
}

TEST(LambdaMax, RayleighLowerBound) {
    Rng r(8);
    const Matrix m = random_symmetric(r, 5);
    const double lam = lambda_max_symmetric(m, 1e-10).value;
    for (int k = 0; k < 100; ++k) {
        Vector v(5);
        r.fill_normal(v);
        const Vector mv = m * std::span<const double>(v);
        EXPECT_GE(lam + 1e-9, dot(v, mv) / dot(v, v));
    }
}

TEST(Jacobi, ReconstructsMatrix) {
    Rng r(10);
    const Matrix m = random_symmetric(r, 6);
    const auto eig = jacobi_eigen(m);
    EXPECT_TRUE(std::is_sorted(eig.values.begin(), eig.values.end()));
    const Matrix back = eig.vectors * Matrix::diagonal(eig.values) * eig.vectors.transpose();
    EXPECT_LE(frobenius_norm(back - m), 1e-11);
    EXPECT_LE(frobenius_norm(eig.vectors.transpose() * eig.vectors - Matrix::identity(6)), 1e-11);
}

TEST(Assignment, SimpleCases) {
    Matrix c(4, 4, 1.0);
    for (std::size_t i = 0; i < 4; ++i) c(i, i) = 0.0;
    const auto a = assignment_min_cost(c);
    EXPECT_EQ(a.total_cost, 0.0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.permutation[i], i);

    const auto s = assignment_min_cost(Matrix{{1.0, 0.0}, {0.0, 1.0}});
    EXPECT_EQ(s.total_cost, 0.0);
    EXPECT_EQ(s.permutation, (std::vector<std::size_t>{1, 0}));
}

TEST(Assignment, MatchesExhaustiveSearch) {
    Rng r(14);
    for (std::size_t n = 1; n <= 7; ++n) {
        for (int trial = 0; trial < 50; ++trial) {
            Matrix c(n, n);
            for (double& v : c.data()) v = r.uniform() * 10.0;
            const auto a = assignment_min_cost(c);
            std::vector<std::size_t> sorted = a.permutation;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(sorted[i], i);
            EXPECT_NEAR(a.total_cost, brute_force_assignment(c), 1e-9) << "n=" << n;
        }
    }
}

TEST(Assignment, RejectsNonFinite) {
    Matrix c(2, 2, 1.0);
    c(0, 1) = NAN;
    try {
        (void)assignment_min_cost(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFinite);
    }
    EXPECT_THROW((void)assignment_min_cost(Matrix(2, 3)), Error);
}

TEST(Hash, Fnv1aReferenceValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(Parallel, ResultIndependentOfWorkerCount) {
    const Rng root(21);
    auto run = [&](unsigned threads) {
        std::vector<double> out(1000);
        parallel_for(out.size(), [&](std::size_t i) {
            Rng s = root.substream(i);
            out[i] = s.normal();
        }, threads);
        return out;
    };
    const auto one = run(1);
    EXPECT_EQ(one, run(3));
    EXPECT_EQ(one, run(8));
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(100, [](std::size_t i) {
        if (i == 57) throw Error(ErrorCode::NonFinite, "boom");
    }, 4), Error);
}
