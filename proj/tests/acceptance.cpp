// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Arguments (optional) select criterion numbers, e.g. `acceptance 1 10`.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "sgm/experiments.hpp"
#include "sgm/sgm.hpp"
#include "sgm/suite.hpp"

using namespace sgm;

namespace {

const std::string kConfigDir = SGM_CONFIG_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

MixtureTarget random_mixture(Rng& rng, std::size_t d, std::size_t comps) {
    std::vector<GaussianComponent> cs;
    std::vector<double> w(comps);
    double total = 0.0;
    for (double& v : w) total += (v = 0.2 + rng.uniform());
    for (std::size_t l = 0; l < comps; ++l) {
        Vector mu(d);
        for (double& v : mu) v = rng.uniform(-2.0, 2.0);
        Matrix b(d, d);
        for (double& v : b.data()) v = 0.5 * rng.normal();
        cs.push_back({w[l] / total, mu, b * b.transpose() + 0.2 * Matrix::identity(d)});
    }
    return MixtureTarget(std::move(cs));
}

// 1. Oracle score and Jacobian against central differences.
Outcome oracle_correctness() {
    Rng r(101);
    double worst_s = 0.0, worst_j = 0.0;
    for (int k = 0; k < 500; ++k) {
        const std::size_t d = 1 + r.below(4);
        const ScoreOracle o(random_mixture(r, d, 1 + r.below(3)), ForwardSpec{r.uniform(0.5, 2.0)});
        const double t = std::exp(r.uniform(std::log(1e-3), std::log(30.0)));
        Vector x(d);
        for (double& v : x) v = r.uniform(-3.0, 3.0);
        const Vector s = o.score(t, x);
        double es = 0.0, ss = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
            Vector xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            es = std::max(es, std::abs((o.log_density(t, xp) - o.log_density(t, xm)) / (2.0 * h) - s[i]));
            ss = std::max(ss, std::abs(s[i]));
        }
        worst_s = std::max(worst_s, es / ss);
        const Matrix jac = o.jacobian(t, x);
        const double h = 1e-5 * std::sqrt(std::min(t, 1.0));
        double ej = 0.0, sj = 1.0;
        for (std::size_t c = 0; c < d; ++c) {
            Vector xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            const Vector sp = o.score(t, xp), sm = o.score(t, xm);
            for (std::size_t i = 0; i < d; ++i) {
                ej = std::max(ej, std::abs((sp[i] - sm[i]) / (2.0 * h) - jac(i, c)));
                sj = std::max(sj, std::abs(jac(i, c)));
            }
        }
        worst_j = std::max(worst_j, ej / sj);
    }
    return {worst_s <= 1e-5 && worst_j <= 1e-5,
            fmt("500 cases, max rel err score %.2e, jacobian %.2e (tol 1e-5)", worst_s, worst_j)};
}

// 2. Stationary target: exact score, zero Fisher loss for the zero-initialized model, λ_max = 0.
Outcome stationary_exactness() {
    double worst_score = 0.0, worst_lambda = 0.0, worst_fisher = 0.0;
    Rng r(202);
    for (double sigma : {0.5, 1.0, 2.0}) {
        const ScoreOracle o(presets::isotropic_gaussian(3, sigma * sigma), ForwardSpec{sigma});
        for (int k = 0; k < 500; ++k) {
            Vector x(3);
            for (double& v : x) v = r.uniform(-5.0, 5.0);
            const double t = std::exp(r.uniform(std::log(1e-3), std::log(30.0)));
            const Vector s = o.score(t, x);
            for (std::size_t i = 0; i < 3; ++i) {
                const double exact = -x[i] / (sigma * sigma);
                worst_score = std::max(worst_score, std::abs(s[i] - exact) / (1.0 + std::abs(exact)));
            }
            worst_lambda = std::max(worst_lambda, std::abs(shifted_lambda_max(o, t, x)));
        }
        ScheduleParams p;
        p.n = 1024;
        p.sigma = sigma;
        p.width_max = 16;
        p.depth = 2;
        ScoreModel m(build_schedule(p), sigma);
        m.initialize(Rng(203));
        const ScoreFn model = as_score_fn(m);
        for (std::size_t f = 0; f < m.net_count(); ++f) {
            const Estimate e = fisher_loss(model, o, m.schedule().interval_start(f), m.schedule().interval_end(f),
                                           Rng(204, f), 256, 2);
            worst_fisher = std::max(worst_fisher, e.value);
        }
    }
    // Fisher loss: the only residual is rounding in the oracle's eigenbasis (≈ 1e-32 per draw).
    return {worst_score <= 4e-16 && worst_lambda <= 1e-14 && worst_fisher <= 1e-28,
            fmt("score rel err %.1e, |lambda_max| %.1e, zero-init Fisher loss %.1e", worst_score, worst_lambda,
                worst_fisher)};
}

// 3. Denoising trick, 3 targets x 3 times at 1e5 draws.
Outcome denoising() {
    SuiteResult out;
    suite_denoising(out, Rng(303), 100000);
    double worst_z = 0.0;
    for (const auto& rec : out.records)
        worst_z = std::max(worst_z, rec["lhs"].get<double>() / std::max(rec["rhs"].get<double>() / 3.0, 1e-300));
    return {out.pass && out.records.size() == 9,
            fmt("%zu cases, max |gap|/SE %.2f (tol 3)", out.records.size(), worst_z)};
}

// 4. Marginal reversal on a single Gaussian, 2048 steps, 1e5 paths.
Outcome reversal() {
    const MixtureTarget target = reversal_gaussian();
    const ForwardSpec spec;
    const ScoreOracle o(target, spec);
    const double tl = 1e-2, th = 4.0;
    const std::size_t n = 100000, steps = 2048, d = target.dim();
    const auto marg = marginal_at(target, spec, tl).mixture;
    const Vector mu = marg.mean();
    const Matrix cov = marg.covariance();
    ReversalOptions opt;
    opt.fractions = {1.0};
    std::vector<Matrix> finals;
    double worst_z = 0.0;
    bool pass = true;
    std::uint64_t tag = 0;
    for (const auto& prof : {DiffusionProfile::ode(), DiffusionProfile::ddpm()}) {
        const auto rep = check_marginal_reversal(o, prof, tl, th, steps, n, Rng(404, tag++), opt);
        pass = pass && rep.pass;
        const auto m = moment_report(rep.ensembles[0]);
        for (std::size_t a = 0; a < d; ++a) {
            worst_z = std::max(worst_z, std::abs(m.mean[a] - mu[a]) / std::sqrt(cov(a, a) / double(n)));
            for (std::size_t b = 0; b < d; ++b) {
                const double se = std::sqrt((cov(a, a) * cov(b, b) + cov(a, b) * cov(a, b)) / double(n));
                worst_z = std::max(worst_z, std::abs(m.covariance(a, b) - cov(a, b)) / se);
            }
        }
        finals.push_back(rep.ensembles[0]);
    }
    // ODE vs DDPM with the reversal tolerance: twice the two-sample noise floor plus h plus 3 SE.
    const Matrix f1 = forward_marginal_sample(spec, target, Rng(405, 1), tl, n);
    const Matrix f2 = forward_marginal_sample(spec, target, Rng(405, 2), tl, n);
    const auto w = w1_sliced(finals[0], finals[1], 128, Rng(406));
    const auto floor = w1_sliced(f1, f2, 128, Rng(406));
    const double tol = 2.0 * floor.value + (th - tl) / double(steps) + 3.0 * w.std_error;
    pass = pass && worst_z <= 3.0 && w.value <= tol;
    return {pass, fmt("max moment |err|/SE %.2f (tol 3), sliced W1(ode, ddpm) %.4f <= %.4f", worst_z, w.value, tol)};
}

// 5. Stability suite.
Outcome stability() {
    SuiteResult out;
    suite_stability(out, Rng(505), 1024);
    double min_slack = std::numeric_limits<double>::infinity();
    double linear_err = -1.0;
    for (const auto& rec : out.records) {
        if (rec.contains("slack") && rec["slack"].is_number()) min_slack = std::min(min_slack, rec["slack"].get<double>());
        if (rec.value("case", "") == "linear_shift") {
            // every path is shifted by the same vector, so the coupled distance has zero spread
            const double gap = rec["analytic_gap"].get<double>();
            linear_err = std::abs(rec["lhs"].get<double>() - gap) / gap;
        }
    }
    const bool linear_ok = linear_err >= 0.0 && linear_err <= 1e-9;
    return {out.pass && linear_ok,
            fmt("%zu cases, min slack %.6f, linear-drift rel err vs closed form %.1e", out.records.size(), min_slack,
                linear_err)};
}

// 6. One-sided Lipschitz envelope on the benchmark.
Outcome lipschitz_envelope() {
    const ScoreOracle o(presets::two_gaussian(3), ForwardSpec{});
    ScheduleParams p;
    p.n = 4096;
    const TimeSchedule s = build_schedule(p);
    const Matrix xs = ball_grid(3, 4.0, 9);
    const double at10 = sup_shifted_lambda_max(o, 10.0, xs);
    std::vector<double> integrals;
    bool dominated = true;
    for (std::size_t count : {40u, 80u, 160u}) {
        const auto rep = check_property_B(o, geometric_times(s.t_low(), s.t_high(), count), xs, 1.0, frozen::kPropertyB);
        dominated = dominated && rep.dominated;
        integrals.push_back(rep.integral);
    }
    double drift = 0.0;
    for (std::size_t i = 1; i < integrals.size(); ++i)
        drift = std::max(drift, std::abs(integrals[i] - integrals[i - 1]) / integrals[i]);
    const bool finite = std::all_of(integrals.begin(), integrals.end(), [](double v) { return std::isfinite(v); });
    return {at10 <= 1e-6 && dominated && finite && drift <= 0.05,
            fmt("sup lambda at t=10 %.2e, dominated (C=%.2f) %s, integral %.4f/%.4f/%.4f, refinement change %.2f%%", at10,
                frozen::kPropertyB, dominated ? "yes" : "no", integrals[0], integrals[1], integrals[2], 100.0 * drift)};
}

// 7. Training beats the stationary baseline on the benchmark.
Outcome training() {
    const Config c = Config::load(kConfigDir + "/benchmark.cfg");
    const ExperimentConfig e = experiment_from_config(c);
    PipelineOptions opt;
    opt.keep_model = false;
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineResult r = run_pipeline(e, opt);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t checked = 0, worse = 0;
    for (std::size_t f = 0; f < r.fisher_intervals.size(); ++f) {
        if (r.interval_tau_k[f] > 2.0) continue;
        ++checked;
        if (!(r.fisher_intervals[f].value < r.fisher_baseline_intervals[f].value)) ++worse;
    }
    return {checked > 0 && worse == 0 && r.w1.value < r.w1_baseline.value && wall <= 1800.0,
            fmt("%zu/%zu intervals with tau_k<=2 beat baseline; Fisher %.4f vs %.4f; W1 %.4f vs baseline %.4f; %.0f s",
                checked - worse, checked, r.fisher.value, r.fisher_baseline.value, r.w1.value, r.w1_baseline.value, wall)};
}

// 8. Rate sweep (property-based substitute).
Outcome rate_behavior() {
    const ExperimentConfig e = experiment_from_config(Config::load(kConfigDir + "/sweep.cfg"));
    const SweepResult res = rate_sweep(e);
    const auto& s = res.summary;
    std::ostringstream med;
    for (std::size_t i = 0; i < s.median_w1.size(); ++i) med << (i ? "," : "") << fmt("%.4f", s.median_w1[i]);
    return {s.monotone && s.slope_negative,
            fmt("median W1 [%s], inversions %zu, slope %.3f CI [%.3f, %.3f], theory %.3f", med.str().c_str(),
                s.inversions, s.slope, s.ci_low, s.ci_high, s.theoretical_exponent)};
}

// 9. Determinism across re-runs and thread counts.
Outcome determinism() {
    const Config c = Config::load(kConfigDir + "/smoke.cfg");
    const ExperimentConfig e = experiment_from_config(c);
    PipelineOptions opt;
    auto run = [&](unsigned threads) {
        set_threads(threads);
        PipelineResult r = run_pipeline(e, opt);
        SuiteResult v;
        suite_denoising(v, Rng(909), 2000);
        suite_stability(v, Rng(910), 128);
        set_threads(1);
        return std::make_tuple(r.metrics_json().dump(), r.model->serialize(), r.samples, v.records.dump());
    };
    const auto a = run(1), b = run(1), c3 = run(3);
    const bool same = a == b && a == c3;
    return {same, fmt("pipeline + verify outputs bitwise %s across 2 re-runs and threads {1, 3}",
                      same ? "identical" : "DIFFERENT")};
}

// 10. Metric oracles.
Outcome metric_oracles() {
    Rng r(1010);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const std::size_t n = 1 + k % 7;
        Matrix a(n, 3), b(n, 3);
        for (double& v : a.data()) v = r.normal();
        for (double& v : b.data()) v = 2.0 * r.normal() + 0.5;
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::sqrt(squared_distance(a.row(i), b.row(perm[i])));
            best = std::min(best, s / double(n));
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(w1_exact(a, b) - best));
    }
    const double s1 = 1.0, s2 = 1.6;
    const std::size_t n = 100000;
    Matrix x(n, 1), y(n, 1);
    for (double& v : x.data()) v = s1 * r.normal();
    for (double& v : y.data()) v = s2 * r.normal();
    const double expect = std::abs(s1 - s2) * std::sqrt(2.0 / std::numbers::pi);
    const double got = w1_sliced(x, y, 16, Rng(1011)).value;
    const double se = std::sqrt((s1 * s1 + s2 * s2) / double(n));
    return {worst <= 1e-12 && std::abs(got - expect) <= 3.0 * se,
            fmt("exact vs brute force max diff %.1e; 1-d Gaussian W1 %.5f vs %.5f (3 SE = %.5f)", worst, got, expect,
                3.0 * se)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"oracle correctness", oracle_correctness}, {"stationary exactness", stationary_exactness},
        {"denoising trick", denoising},             {"marginal reversal", reversal},
        {"stability bounds", stability},            {"one-sided Lipschitz envelope", lipschitz_envelope},
        {"training improves the score", training},  {"rate behavior", rate_behavior},
        {"determinism", determinism},               {"metric oracles", metric_oracles},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
    set_threads(1);
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!only.empty() && !only.count(k + 1)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& ex) {
            o = {false, std::string("error: ") + ex.what()};
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %zu (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                    o.detail.c_str(), wall);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
